# -*- coding: utf-8 -*-
"""
__init__ file for the pyphm package: quaternion, vectormap and PHM
(parameterized hypercomplex multiplication) layers, the ResNets built
from them, and the tools to train, budget and check them.
"""
__version__ = '0.1.0'

from .errors import (PyphmError, ShapeError, ConfigError, DivisibilityError,
                     CorruptFileError, CheckpointError, NonFiniteError,
                     DivergenceError, UnsupportedOpError,
                     UninitializedStatsError, PrecisionError)
from .tensor import Tensor, ConvSpec, precision, set_precision, no_grad
from .autodiff import backward, grad_check
from .algebra import (Quaternion, hamilton_product, permute_tau,
                      build_L_matrix, build_phm_sign_matrices, assemble_H)
from .layers import (Conv2d, QuaternionConv2d, VectormapConv2d, Linear,
                     PHMLinear, BatchNorm2d, make_conv, quaternion_conv2d,
                     vectormap_conv2d, phm_linear)
from .models import (ArchitectureSpec, preset, build_model, forward,
                     save_checkpoint, load_checkpoint)
from .data import load_cifar, make_synthetic, iterate_batches
from .training import TrainConfig, lr_at, train, train_seeds, evaluate
from . import styles
from .analysis import referencevalues as reflib
from .analysis import count_params, estimate_flops, measure_latency
