# -*- coding: utf-8 -*-
"""
Image datasets: the CIFAR-10 and CIFAR-100 binary files, the standard
CIFAR augmentation (zero pad 4, random crop, horizontal flip, per-channel
standardization) and a synthetic dataset of colored blobs for quick runs.

Binary layout per record: CIFAR-10 has 1 label byte then 3072 pixel bytes,
CIFAR-100 has 2 label bytes (coarse, fine) then 3072 pixel bytes. Pixels
are row-major and channel-planar (1024 red, 1024 green, 1024 blue).

Expected directory layout under the data root:
    cifar-10-batches-bin/data_batch_1.bin ... data_batch_5.bin, test_batch.bin
    cifar-100-binary/train.bin, test.bin
"""
import json
import os
from dataclasses import dataclass

import numpy as np
import structlog
from matplotlib.colors import hsv_to_rgb

from .errors import ConfigError, CorruptFileError, ShapeError
from .models import read_container, CHECKPOINT_VERSION

log = structlog.get_logger()

DATASET_FORMAT = 'pyphm-dataset'
PIXELS = 3 * 32 * 32
LABEL_BYTES = {'c10': 1, 'c100': 2}
VARIANTS = {'c10': 'c10', 'cifar10': 'c10', 'c100': 'c100',
            'cifar100': 'c100'}
CIFAR_FILES = {'c10': ('cifar-10-batches-bin',
                       ['data_batch_%d.bin' % i for i in range(1, 6)],
                       ['test_batch.bin']),
               'c100': ('cifar-100-binary', ['train.bin'], ['test.bin'])}
CIFAR_SIZES = {'train': 50000, 'val': 10000}
STATS_FILE = 'pyphm-train-stats.json'


@dataclass
class LabeledImage:
    """One image [3, H, W] with values in [0, 1] and its class index"""
    pixels: np.ndarray
    label: int

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[0] != 3:
            raise ShapeError('images must be [3, H, W]', self.pixels.shape)
        if self.pixels.min() < 0. or self.pixels.max() > 1.:
            raise ConfigError('pixel values must lie in [0, 1]',
                              field='pixels')


@dataclass
class DatasetSplit:
    """
    images [N, 3, H, W] float32 in [0, 1] and integer labels [N]. split is
    'train' or 'val'.
    """
    images: np.ndarray
    labels: np.ndarray
    split: str = 'train'
    classes: int = 10

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or self.images.shape[1] != 3:
            raise ShapeError('images must be [N, 3, H, W]', self.images.shape)
        if self.labels.shape != (self.images.shape[0],):
            raise ShapeError('one label per image', self.images.shape,
                             self.labels.shape)
        if self.split not in ('train', 'val'):
            raise ConfigError("expected 'train' or 'val', got %r" % self.split,
                              field='split')
        if len(self.labels) and (self.labels.min() < 0 or
                                 self.labels.max() >= self.classes):
            raise ConfigError('labels must lie in [0, %d)' % self.classes,
                              field='labels')
        if self.images.size and (self.images.min() < 0. or
                                 self.images.max() > 1.):
            raise ConfigError('pixel values must lie in [0, 1]',
                              field='images')

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, idx):
        return LabeledImage(self.images[idx], int(self.labels[idx]))

    @property
    def image_size(self):
        return self.images.shape[2]

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.classes)


#%% CIFAR binary files
def normalize_variant(variant):
    try:
        return VARIANTS[variant]
    except KeyError:
        raise ConfigError('expected one of %s, got %r'
                          % (sorted(VARIANTS), variant), field='dataset')


def read_cifar_file(path, variant='c10'):
    """(images [N, 3, 32, 32] in [0, 1], labels [N]) from one binary file"""
    label_bytes = LABEL_BYTES[normalize_variant(variant)]
    record = label_bytes + PIXELS
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % record != 0:
        raise CorruptFileError(path, 'a positive multiple of %d' % record,
                               raw.size)
    records = raw.reshape(-1, record)
    # the fine label is the last label byte
    labels = records[:, label_bytes - 1].astype(np.int64)
    images = records[:, label_bytes:].reshape(-1, 3, 32, 32)
    return images.astype(np.float32) / np.float32(255.), labels


def load_cifar(root, variant='c10'):
    """(train, val) DatasetSplits from the binary files under root"""
    variant = normalize_variant(variant)
    folder, train_files, val_files = CIFAR_FILES[variant]
    classes = 10 if variant == 'c10' else 100
    splits = []
    for tag, names in (('train', train_files), ('val', val_files)):
        parts = [read_cifar_file(os.path.join(root, folder, name), variant)
                 for name in names]
        images = np.concatenate([p[0] for p in parts])
        labels = np.concatenate([p[1] for p in parts])
        if len(labels) != CIFAR_SIZES[tag]:
            log.warning('unexpected split size', split=tag,
                        records=len(labels), expected=CIFAR_SIZES[tag])
        splits.append(DatasetSplit(images, labels, tag, classes))
    log.info('CIFAR dataset loaded', variant=variant, n_train=len(splits[0]),
             n_val=len(splits[1]))
    return tuple(splits)


#%% statistics and augmentation
def channel_stats(split):
    """Per-channel mean and standard deviation of a split"""
    images = split.images.astype(np.float64)
    return images.mean(axis=(0, 2, 3)), images.std(axis=(0, 2, 3))


def cached_stats(split, path):
    """
    channel_stats of the train split, read from path when it exists and
    written there otherwise
    """
    if path is not None and os.path.exists(path):
        with open(path) as fh:
            stored = json.load(fh)
        return np.array(stored['mean']), np.array(stored['std'])
    mean, std = channel_stats(split)
    if path is not None:
        try:
            with open(path, 'w') as fh:
                json.dump({'mean': mean.tolist(), 'std': std.tolist()}, fh,
                          sort_keys=True)
        except OSError as err:
            log.warning('dataset statistics not cached', path=str(path),
                        error=str(err))
        else:
            log.debug('dataset statistics cached', path=str(path))
    return mean, std


def stats_path(root, variant='c10'):
    """Where cached_stats keeps the train statistics of a CIFAR variant"""
    folder = CIFAR_FILES[normalize_variant(variant)][0]
    return os.path.join(root, folder, STATS_FILE)


def standardize(images, mean, std):
    """(x - mean) / std per channel, for [3, H, W] or [N, 3, H, W]"""
    shape = (3, 1, 1) if images.ndim == 3 else (1, 3, 1, 1)
    out = (images - np.reshape(mean, shape)) / np.reshape(std, shape)
    return out.astype(np.float32)


@dataclass
class AugmentSpec:
    """Zero padding, crop size (None keeps the image size) and flip odds"""
    pad: int = 4
    crop: int = None
    flip_prob: float = 0.5
    enabled: bool = True

    def __post_init__(self):
        if self.pad < 0:
            raise ConfigError('must be non-negative', field='pad')
        if not 0. <= self.flip_prob <= 1.:
            raise ConfigError('must lie in [0, 1]', field='flip_prob')


def flip_horizontal(image):
    return image[..., ::-1].copy()


def random_crop(image, rng, pad=4, size=None):
    """Zero pad by pad on every side, then cut a random size x size window"""
    _, h, w = image.shape
    size = h if size is None else size
    padded = np.pad(image, ((0, 0), (pad, pad), (pad, pad)))
    top = rng.integers(0, h + 2*pad - size + 1)
    left = rng.integers(0, w + 2*pad - size + 1)
    return padded[:, top:top + size, left:left + size]


def augment(image, rng, spec=None, mean=None, std=None):
    """Random crop and flip of one [3, H, W] image, then standardization"""
    spec = AugmentSpec() if spec is None else spec
    out = image
    if spec.enabled:
        out = random_crop(out, rng, spec.pad, spec.crop)
        if rng.random() < spec.flip_prob:
            out = flip_horizontal(out)
    if mean is not None:
        out = standardize(out, mean, std)
    return out


def sample_rng(seed, epoch, index):
    """Generator for one sample in one epoch, independent of batch order"""
    return np.random.default_rng([seed, epoch, index])


def iterate_batches(split, batch_size, epoch=0, seed=0, train=True,
                    spec=None, mean=None, std=None):
    """
    Yield (images [B, 3, H, W], labels [B]) over the whole split. Train
    mode shuffles with a generator seeded by (seed, epoch) and augments
    every sample with its own generator; the last batch may be short.
    """
    if batch_size < 1:
        raise ConfigError('must be positive', field='batch')
    order = np.arange(len(split))
    if train:
        np.random.default_rng([seed, epoch]).shuffle(order)
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        if train:
            images = np.stack([augment(split.images[i],
                                       sample_rng(seed, epoch, int(i)), spec,
                                       mean, std) for i in idx])
        elif mean is not None:
            images = standardize(split.images[idx], mean, std)
        else:
            images = split.images[idx]
        yield images, split.labels[idx]


#%% synthetic data
def centroid_accuracy(split):
    """Train accuracy (%) of a nearest-centroid classifier in pixel space"""
    flat = split.images.reshape(len(split), -1).astype(np.float64)
    centroids = np.stack([flat[split.labels == c].mean(axis=0)
                          for c in range(split.classes)])
    dist = ((flat[:, None, :] - centroids[None, :, :])**2).sum(axis=2)
    return 100. * float(np.mean(dist.argmin(axis=1) == split.labels))


def draw_blobs(rng, labels, classes, size, noise):
    """A colored Gaussian blob per image; hue and position follow the class"""
    n = len(labels)
    grid = np.arange(size) + 0.5
    yy, xx = np.meshgrid(grid, grid, indexing='ij')
    hues = np.stack([np.arange(classes) / classes, np.full(classes, 0.9),
                     np.full(classes, 0.95)], axis=1)
    colors = hsv_to_rgb(hues)
    angles = 2. * np.pi * np.arange(classes) / classes
    radius = size / 4.
    images = np.empty((n, 3, size, size))
    for i, label in enumerate(labels):
        cy = size/2. + radius*np.sin(angles[label]) + rng.normal(0., size/32.)
        cx = size/2. + radius*np.cos(angles[label]) + rng.normal(0., size/32.)
        sigma = size / 6. * rng.uniform(0.8, 1.2)
        blob = np.exp(-((yy - cy)**2 + (xx - cx)**2) / (2. * sigma**2))
        background = rng.uniform(0.1, 0.3)
        for c in range(3):
            images[i, c] = background*(1. - blob) + colors[label, c]*blob
    images += rng.normal(0., noise, size=images.shape)
    return np.clip(images, 0., 1.)


def make_synthetic(classes=10, per_class=20, size=32, seed=0,
                   val_per_class=None, min_centroid_accuracy=60.,
                   max_attempts=5):
    """
    (train, val) splits of class-conditional blob images, exactly
    per_class train images per class (val_per_class defaults to half of
    that). Deterministic per seed. When nearest-centroid train accuracy
    falls short of min_centroid_accuracy the set is regenerated with less
    noise.
    """
    if classes < 2:
        raise ConfigError('needs at least 2 classes', field='classes')
    if per_class < 1 or size < 4:
        raise ConfigError('per_class must be positive and size at least 4',
                          field='synthetic')
    if val_per_class is None:
        val_per_class = max(1, per_class // 2)
    noise = 0.15
    for attempt in range(max_attempts):
        rng = np.random.default_rng([seed, attempt])
        splits = []
        for tag, count in (('train', per_class), ('val', val_per_class)):
            labels = np.repeat(np.arange(classes), count)
            rng.shuffle(labels)
            images = draw_blobs(rng, labels, classes, size, noise)
            splits.append(DatasetSplit(images, labels, tag, classes))
        accuracy = centroid_accuracy(splits[0])
        if accuracy > min_centroid_accuracy:
            break
        log.info('synthetic set too hard, regenerating', attempt=attempt,
                 centroid_accuracy=accuracy)
        noise /= 2.
    log.info('synthetic dataset made', classes=classes, n_train=len(splits[0]),
             n_val=len(splits[1]), centroid_accuracy=accuracy)
    return tuple(splits)


#%% serialization
def save_dataset(split, path):
    """Write a split to the .npz container used for checkpoints"""
    meta = {'split': split.split, 'classes': int(split.classes)}
    with open(path, 'wb') as fh:
        np.savez(fh, __format__=np.array(DATASET_FORMAT),
                 __version__=np.array(CHECKPOINT_VERSION),
                 __meta__=np.array(json.dumps(meta, sort_keys=True)),
                 images=split.images, labels=split.labels)
    return path


def load_dataset(path):
    contents = read_container(path, DATASET_FORMAT)
    meta = json.loads(str(contents['__meta__']))
    return DatasetSplit(contents['images'], contents['labels'],
                        meta['split'], meta['classes'])

