# -*- coding: utf-8 -*-
"""
The ResNet family built from the layers in pyphm.layers: a real,
quaternion or vectormap frontend (stem plus four stages of residual
blocks) followed by global average pooling and a dense or PHM backend.

Presets follow the names used for the published rows, e.g.
    spec = preset('qphm50', classes=100)
    model = build_model(spec)
    logits = model(batch)

Depths 18 and 34 use basic blocks; 26, 35 and 50 use bottleneck blocks
with 4x expansion. Stage widths start at 64 (real), 112 (quaternion) or
90 (vectormap) and double at every stage; stages 2 to 4 open with a
stride 2 block and every block whose shape changes gets a 1x1 projection
shortcut in the frontend algebra.
"""
import json
import re
from dataclasses import dataclass, asdict, fields

import numpy as np
import structlog

from . import ops
from .errors import (CheckpointError, ConfigError, DivisibilityError,
                     ShapeError)
from .layers import (Layer, Linear, PHMLinear, BatchNorm2d, InitSpec,
                     algebra_multiple, init_weights, make_conv,
                     ALGEBRAS)
from .tensor import ConvSpec

log = structlog.get_logger()

CHECKPOINT_FORMAT = 'pyphm-checkpoint'
CHECKPOINT_VERSION = 1

FAMILIES = {'resnet': ('real', 'dense'),
            'rphm': ('real', 'phm'),
            'quat': ('quaternion', 'dense'),
            'vect': ('vectormap', 'dense'),
            'qphm': ('quaternion', 'phm'),
            'vphm': ('vectormap', 'phm')}

BASE_WIDTHS = {'real': 64, 'quaternion': 112, 'vectormap': 90}

DEPTHS = {18: ('basic', (2, 2, 2, 2)),
          26: ('bottleneck', (1, 2, 4, 1)),
          34: ('basic', (3, 4, 6, 3)),
          35: ('bottleneck', (2, 3, 4, 2)),
          50: ('bottleneck', (3, 4, 6, 3))}

# PHM dimensions tried by the automatic backend, largest first
AUTO_PHM_N = (5, 4, 2)


def round_up(value, multiple):
    return -(-value // multiple) * multiple


@dataclass
class ArchitectureSpec:
    """
    Declarative description of one network. widths are the four stage
    widths before expansion; widen multiplies them and width_divisor
    divides them, rounding up to the algebra's channel multiple.
    phm_n=None lets the backend pick its dimension.
    """
    name: str = 'custom'
    frontend: str = 'real'
    vectormap_dim: int = 3
    backend: str = 'dense'
    phm_n: int = None
    block: str = 'basic'
    multipliers: tuple = (2, 2, 2, 2)
    widths: tuple = (64, 128, 256, 512)
    classes: int = 100
    input_size: int = 32
    in_channels: int = 3
    widen: int = 1
    width_divisor: int = 1
    stem: str = 'cifar'
    trainable_signs: bool = False
    seed: int = 0

    def __post_init__(self):
        self.multipliers = tuple(int(m) for m in self.multipliers)
        self.widths = tuple(int(w) for w in self.widths)

    @property
    def expansion(self):
        return 4 if self.block == 'bottleneck' else 1

    @property
    def multiple(self):
        return algebra_multiple(self.frontend, self.vectormap_dim)

    def stage_widths(self):
        """Stage widths after widening and narrowing"""
        if self.widen == 1 and self.width_divisor == 1:
            return self.widths
        return tuple(round_up(-(-w * self.widen // self.width_divisor),
                              self.multiple) for w in self.widths)

    @property
    def feature_dim(self):
        return self.stage_widths()[-1] * self.expansion

    @property
    def stem_channels(self):
        """Input channels after zero padding to the algebra's multiple"""
        if self.frontend == 'quaternion':
            return 4
        return round_up(self.in_channels, self.multiple)

    def validate(self):
        """Raise ConfigError or DivisibilityError on an unbuildable spec"""
        if self.frontend not in ALGEBRAS:
            raise ConfigError('expected one of %s, got %r'
                              % (ALGEBRAS, self.frontend), field='frontend')
        if self.backend not in ('dense', 'phm'):
            raise ConfigError("expected 'dense' or 'phm', got %r"
                              % self.backend, field='backend')
        if self.block not in ('basic', 'bottleneck'):
            raise ConfigError("expected 'basic' or 'bottleneck', got %r"
                              % self.block, field='block')
        if self.stem not in ('cifar', 'imagenet'):
            raise ConfigError("expected 'cifar' or 'imagenet', got %r"
                              % self.stem, field='stem')
        if len(self.multipliers) != 4 or min(self.multipliers) < 1:
            raise ConfigError('need four positive block multipliers',
                              field='multipliers')
        if len(self.widths) != 4 or min(self.widths) < 1:
            raise ConfigError('need four positive stage widths',
                              field='widths')
        for value, name in ((self.classes, 'classes'),
                            (self.widen, 'widen'),
                            (self.width_divisor, 'width_divisor'),
                            (self.input_size, 'input_size'),
                            (self.in_channels, 'in_channels'),
                            (self.vectormap_dim, 'vectormap_dim')):
            if value < 1:
                raise ConfigError('must be positive, got %d' % value,
                                  field=name)
        multiple = self.multiple
        for stage, width in enumerate(self.stage_widths(), start=1):
            if width % multiple != 0:
                raise DivisibilityError(
                    'stage%d' % stage, width, multiple,
                    'choose stage widths divisible by %d for a %s frontend'
                    % (multiple, self.frontend))
        if self.backend == 'phm':
            self.resolve_phm_n()
        return self

    def resolve_phm_n(self):
        """PHM dimension of the backend; None for a dense backend"""
        if self.backend != 'phm':
            return None
        d = self.feature_dim
        k = self.classes
        if self.phm_n is not None:
            n = self.phm_n
            if n < 1:
                raise ConfigError('must be at least 1', field='phm_n')
            remedy = 'choose N dividing both d=%d and k=%d' % (d, k)
            if d % n != 0:
                raise DivisibilityError('backend (features)', d, n, remedy)
            if k % n != 0:
                raise DivisibilityError('backend (classes)', k, n, remedy)
            return n
        for n in AUTO_PHM_N:
            if d % n == 0 and k % n == 0:
                return n
        raise DivisibilityError(
            'backend (classes)', k, AUTO_PHM_N[-1],
            'no N in %s divides both %d features and %d classes; change the '
            'class count or the backend' % (AUTO_PHM_N, d, k))

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError('unknown architecture fields %s'
                              % sorted(unknown), field='arch')
        return cls(**values)


def preset(name, classes=100, **overrides):
    """ArchitectureSpec of a named variant such as 'resnet18' or 'vphm50'"""
    match = re.match(r'^(%s)(\d+)$' % '|'.join(FAMILIES), name)
    if match is None or int(match.group(2)) not in DEPTHS:
        raise ConfigError('unknown architecture %r; expected one of %s'
                          % (name, ', '.join(preset_names())), field='arch')
    family, depth = match.group(1), int(match.group(2))
    frontend, backend = FAMILIES[family]
    block, multipliers = DEPTHS[depth]
    base = BASE_WIDTHS[frontend]
    values = dict(name=name, frontend=frontend, backend=backend, block=block,
                  multipliers=multipliers,
                  widths=tuple(base * 2**s for s in range(4)),
                  classes=classes)
    values.update(overrides)
    return ArchitectureSpec(**values)


def preset_names():
    return ['%s%d' % (family, depth) for family in FAMILIES
            for depth in sorted(DEPTHS)]


#%% blocks
def trace_chain(layers, shape, prefix):
    records = []
    for attr, layer in layers:
        path = attr if not prefix else prefix + '.' + attr
        shape, found = layer.trace(shape, path)
        records.extend(found)
    return shape, records


class ResidualBlock(Layer):
    """output = relu(shortcut(x) + body(x))"""
    body_names = ()

    def add_shortcut(self, in_channels, out_channels, stride, algebra, dim):
        if stride != 1 or in_channels != out_channels:
            self.proj = make_conv(algebra, in_channels, out_channels,
                                  ConvSpec(kernel=1, stride=stride, padding=0),
                                  dim=dim, name=self.path('proj'))
            self.proj_bn = BatchNorm2d(out_channels, name=self.path('proj_bn'))

    def path(self, attr):
        return attr if not self.name else self.name + '.' + attr

    @property
    def has_projection(self):
        return hasattr(self, 'proj')

    def shortcut(self, x):
        if self.has_projection:
            return self.proj_bn(self.proj(x))
        return x

    def body(self, x):
        out = x
        names = self.body_names
        for i in range(0, len(names), 2):
            conv = getattr(self, names[i])
            bn = getattr(self, names[i + 1])
            out = bn(conv(out))
            if i + 2 < len(names):
                out = ops.relu(out)
        return out

    def forward(self, x):
        return ops.relu(ops.add(self.body(x), self.shortcut(x)))

    def trace(self, shape, prefix=''):
        out, records = trace_chain(
            [(attr, getattr(self, attr)) for attr in self.body_names],
            shape, prefix)
        if self.has_projection:
            _, found = trace_chain([('proj', self.proj),
                                    ('proj_bn', self.proj_bn)], shape, prefix)
            records.extend(found)
        return out, records


class BasicBlock(ResidualBlock):
    """Two 3x3 convolutions"""
    body_names = ('conv1', 'bn1', 'conv2', 'bn2')
    expansion = 1

    def __init__(self, in_channels, planes, stride=1, algebra='real', dim=3,
                 name=None):
        super().__init__(name)
        self.conv1 = make_conv(algebra, in_channels, planes,
                               ConvSpec.same(3, stride), dim=dim,
                               name=self.path('conv1'))
        self.bn1 = BatchNorm2d(planes, name=self.path('bn1'))
        self.conv2 = make_conv(algebra, planes, planes, ConvSpec.same(3),
                               dim=dim, name=self.path('conv2'))
        self.bn2 = BatchNorm2d(planes, name=self.path('bn2'))
        self.add_shortcut(in_channels, planes, stride, algebra, dim)


class Bottleneck(ResidualBlock):
    """1x1 reduce, 3x3 (carrying the stride), 1x1 expand by 4"""
    body_names = ('conv1', 'bn1', 'conv2', 'bn2', 'conv3', 'bn3')
    expansion = 4

    def __init__(self, in_channels, planes, stride=1, algebra='real', dim=3,
                 name=None):
        super().__init__(name)
        out_channels = planes * self.expansion
        self.conv1 = make_conv(algebra, in_channels, planes,
                               ConvSpec(kernel=1, stride=1, padding=0),
                               dim=dim, name=self.path('conv1'))
        self.bn1 = BatchNorm2d(planes, name=self.path('bn1'))
        self.conv2 = make_conv(algebra, planes, planes,
                               ConvSpec.same(3, stride), dim=dim,
                               name=self.path('conv2'))
        self.bn2 = BatchNorm2d(planes, name=self.path('bn2'))
        self.conv3 = make_conv(algebra, planes, out_channels,
                               ConvSpec(kernel=1, stride=1, padding=0),
                               dim=dim, name=self.path('conv3'))
        self.bn3 = BatchNorm2d(out_channels, name=self.path('bn3'))
        self.add_shortcut(in_channels, out_channels, stride, algebra, dim)


class Stage(Layer):
    """A run of residual blocks named block0, block1, ..."""
    def __init__(self, name=None):
        super().__init__(name)
        self.depth = 0

    def append(self, block):
        setattr(self, 'block%d' % self.depth, block)
        self.depth += 1

    @property
    def blocks(self):
        return [getattr(self, 'block%d' % i) for i in range(self.depth)]

    def forward(self, x):
        for block in self.blocks:
            x = block(x)
        return x

    def trace(self, shape, prefix=''):
        return trace_chain([('block%d' % i, block)
                            for i, block in enumerate(self.blocks)],
                           shape, prefix)


#%% model
class Model(Layer):
    """
    Stem, four stages, global average pooling and the backend. Parameters
    are named by their path, e.g. 'stem.weight', 'stage2.block0.conv1.r',
    'head.blocks'.
    """
    def __init__(self, spec):
        super().__init__(None)
        spec.validate()
        self.spec = spec
        algebra = spec.frontend
        dim = spec.vectormap_dim
        widths = spec.stage_widths()
        if spec.stem == 'imagenet':
            stem_spec = ConvSpec(kernel=7, stride=2, padding=3)
        else:
            stem_spec = ConvSpec.same(3)
        self.stem = make_conv(algebra, spec.stem_channels, widths[0],
                              stem_spec, dim=dim, name='stem')
        self.stem_bn = BatchNorm2d(widths[0], name='stem_bn')
        block_type = Bottleneck if spec.block == 'bottleneck' else BasicBlock
        channels = widths[0]
        for s, (width, count) in enumerate(zip(widths, spec.multipliers)):
            stage = Stage(name='stage%d' % (s + 1))
            for b in range(count):
                stride = 2 if (b == 0 and s > 0) else 1
                stage.append(block_type(channels, width, stride, algebra, dim,
                                        name='%s.block%d' % (stage.name, b)))
                channels = width * block_type.expansion
            setattr(self, stage.name, stage)
        self.phm_n = spec.resolve_phm_n()
        if self.phm_n is None:
            self.head = Linear(channels, spec.classes, name='head')
        else:
            self.head = PHMLinear(channels, spec.classes, n=self.phm_n,
                                  trainable_signs=spec.trainable_signs,
                                  name='head')
        init_weights(self, InitSpec(seed=spec.seed))

    @property
    def stages(self):
        return [self.stage1, self.stage2, self.stage3, self.stage4]

    def check_input(self, x):
        spec = self.spec
        expected = (spec.in_channels, spec.input_size, spec.input_size)
        if x.ndim != 4 or tuple(x.shape[1:]) != expected:
            raise ShapeError('%s expects input [N, %d, %d, %d]'
                             % ((spec.name,) + expected), x.shape)

    def features(self, x):
        """Pooled frontend features, [N, feature_dim]"""
        self.check_input(x)
        out = ops.pad_channels(x, self.spec.stem_channels)
        out = ops.relu(self.stem_bn(self.stem(out)))
        if self.spec.stem == 'imagenet':
            out = ops.max_pool2d(out, ConvSpec(kernel=3, stride=2, padding=1))
        for stage in self.stages:
            out = stage(out)
        return ops.global_avg_pool(out)

    def forward(self, x):
        return self.head(self.features(x))

    def trace(self, shape=None, prefix=''):
        """Per-layer records for one image; shape defaults to the spec's"""
        spec = self.spec
        if shape is None:
            shape = (spec.in_channels, spec.input_size, spec.input_size)
        shape = (spec.stem_channels,) + tuple(shape[1:])
        shape, records = trace_chain([('stem', self.stem),
                                      ('stem_bn', self.stem_bn)], shape,
                                     prefix)
        if spec.stem == 'imagenet':
            pool = ConvSpec(kernel=3, stride=2, padding=1)
            shape = (shape[0], pool.output_extent(shape[1]),
                     pool.output_extent(shape[2]))
        for stage in self.stages:
            shape, found = stage.trace(shape, stage.name)
            records.extend(found)
        shape = (shape[0],)
        _, found = self.head.trace(shape, 'head')
        records.extend(found)
        return records


def build_model(spec, printout=False):
    """Validate spec and build the network it describes"""
    model = Model(spec)
    log.info('model built', arch=spec.name, params=model.count_params(),
             phm_n=model.phm_n)
    if printout is True:
        print('%s: %d parameters, backend %s' % (
            spec.name, model.count_params(),
            'dense' if model.phm_n is None else 'PHM n=%d' % model.phm_n))
    return model


def forward(model, batch):
    """Logits [N, classes] for a batch [N, C, H, W]"""
    return model(batch)


#%% checkpoints
def save_checkpoint(model, path, extra=None):
    """
    Write every parameter and initialized batch-norm statistic of model to
    an .npz container along with its ArchitectureSpec
    """
    arrays = {'__format__': np.array(CHECKPOINT_FORMAT),
              '__version__': np.array(CHECKPOINT_VERSION),
              '__meta__': np.array(model.spec.to_json())}
    if extra is not None:
        arrays['__extra__'] = np.array(json.dumps(extra, sort_keys=True))
    for name, param in model.named_parameters():
        arrays['param/' + name] = param.data
    for name, stats in model.named_buffers():
        if stats.initialized:
            arrays['buffer/%s/mean' % name] = stats.mean
            arrays['buffer/%s/var' % name] = stats.var
    with open(path, 'wb') as fh:
        np.savez(fh, **arrays)
    log.debug('checkpoint written', path=str(path), tensors=len(arrays) - 3)
    return path


def read_container(path, expected_format):
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as err:
        raise CheckpointError('%s: not a readable container (%s)'
                              % (path, err))
    with archive:
        contents = {key: archive[key] for key in archive.files}
    if str(contents.get('__format__', '')) != expected_format:
        raise CheckpointError('%s: expected format %r' % (path, expected_format))
    version = int(contents.get('__version__', -1))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError('%s: unsupported version %d (expected %d)'
                              % (path, version, CHECKPOINT_VERSION))
    return contents


def load_checkpoint(path, model=None):
    """
    Restore a model from a checkpoint. Without model one is built from the
    stored spec. Names and shapes must match exactly.
    """
    contents = read_container(path, CHECKPOINT_FORMAT)
    if model is None:
        meta = json.loads(str(contents['__meta__']))
        model = Model(ArchitectureSpec.from_dict(meta))
    stored = {key[len('param/'):] for key in contents
              if key.startswith('param/')}
    expected = {name for name, _ in model.named_parameters()}
    if stored != expected:
        missing = sorted(expected - stored)[:5]
        surplus = sorted(stored - expected)[:5]
        raise CheckpointError('%s: parameter names differ (missing %s, '
                              'unexpected %s)' % (path, missing, surplus))
    for name, param in model.named_parameters():
        values = contents['param/' + name]
        if values.shape != param.shape:
            raise CheckpointError('%s: %s has shape %s, model expects %s'
                                  % (path, name, values.shape, param.shape))
        param.data[...] = values
    for name, stats in model.named_buffers():
        key = 'buffer/%s/mean' % name
        if key in contents:
            stats.mean = contents[key].copy()
            stats.var = contents['buffer/%s/var' % name].copy()
        else:
            stats.mean = None
            stats.var = None
    return model
