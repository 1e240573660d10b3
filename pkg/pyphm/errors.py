# -*- coding: utf-8 -*-
"""
Exceptions raised across pyphm.

Everything derives from PyphmError so callers (the command line in
particular) can sort failures into configuration problems, verification
failures and runtime divergence.
"""


class PyphmError(Exception):
    """Base class for all pyphm errors"""


class ShapeError(PyphmError, ValueError):
    """Incompatible tensor shapes. The message names every shape involved."""
    def __init__(self, message, *shapes):
        self.shapes = tuple(tuple(s) for s in shapes)
        if shapes:
            message = ''.join((message, ' (shapes: ',
                               ', '.join(str(tuple(s)) for s in shapes), ')'))
        super().__init__(message)


class ConfigError(PyphmError, ValueError):
    """Invalid configuration. field names the offending setting."""
    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = ''.join((field, ': ', message))
        super().__init__(message)


class DivisibilityError(ConfigError):
    """
    A hypercomplex layer was asked for a width its dimension does not divide.
    where names the layer or stage, remedy says what to change.
    """
    def __init__(self, where, width, dim, remedy=None):
        self.where = where
        self.width = width
        self.dim = dim
        if remedy is None:
            remedy = 'choose a width divisible by %d' % dim
        message = '%s: %d is not divisible by %d; %s' % (where, width, dim,
                                                        remedy)
        super().__init__(message)


class CorruptFileError(PyphmError, IOError):
    """A data file whose size does not fit the record layout"""
    def __init__(self, path, expected, actual):
        self.path = path
        self.expected = expected
        self.actual = actual
        super().__init__('%s: corrupt file, expected %s bytes, found %d'
                         % (path, expected, actual))


class CheckpointError(PyphmError, IOError):
    """Checkpoint container with the wrong format, version, names or shapes"""


class NonFiniteError(PyphmError, FloatingPointError):
    """A NaN or inf showed up; path is the parameter it was found in"""
    def __init__(self, path, what='gradient'):
        self.path = path
        super().__init__('non-finite %s in %s' % (what, path))


class DivergenceError(PyphmError, RuntimeError):
    """Training loss went non-finite. checkpoint is the last good one."""
    def __init__(self, epoch, checkpoint=None):
        self.epoch = epoch
        self.checkpoint = checkpoint
        super().__init__('loss diverged in epoch %d; last good checkpoint: %s'
                         % (epoch, checkpoint))


class UnsupportedOpError(PyphmError, NotImplementedError):
    """Backward requested through an op without a derivative rule"""


class UninitializedStatsError(PyphmError, RuntimeError):
    """Batch norm used in eval mode before any running statistics exist"""


class PrecisionError(PyphmError, RuntimeError):
    """An operation that needs wide precision ran in standard precision"""
