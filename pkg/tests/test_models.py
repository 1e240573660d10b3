import numpy as np
import pytest

from pyphm.errors import (CheckpointError, ConfigError, DivisibilityError,
                          ShapeError)
from pyphm.models import (ArchitectureSpec, preset, preset_names, build_model,
                          forward, save_checkpoint, load_checkpoint,
                          Bottleneck, BasicBlock)
from pyphm.tensor import Tensor, no_grad


def narrow(name, classes=10, **overrides):
    """Small enough to run: widths / 16 and 8 x 8 inputs"""
    values = dict(width_divisor=16, input_size=8)
    values.update(overrides)
    return build_model(preset(name, classes=classes, **values))


def test_presets_cover_every_family_and_depth():
    names = preset_names()
    assert len(names) == 30
    assert {'resnet18', 'qphm50', 'vphm50', 'rphm34'} <= set(names)
    with pytest.raises(ConfigError):
        preset('qphm19')
    with pytest.raises(ConfigError):
        preset('octonion18')


def test_qphm50_layout():
    spec = preset('qphm50').validate()
    assert spec.frontend == 'quaternion' and spec.backend == 'phm'
    assert spec.block == 'bottleneck'
    assert spec.multipliers == (3, 4, 6, 3)
    assert spec.stage_widths() == (112, 224, 448, 896)
    assert spec.feature_dim == 3584
    assert spec.resolve_phm_n() == 4


def test_vphm50_uses_five_dimensional_backend():
    spec = preset('vphm50').validate()
    assert spec.stage_widths() == (90, 180, 360, 720)
    assert spec.feature_dim == 2880
    assert spec.resolve_phm_n() == 5


def test_dense_backend_has_no_phm_n():
    assert preset('quat18').resolve_phm_n() is None


@pytest.mark.parametrize('classes, n', [(28, 4), (30, 5)])
def test_vphm_backend_with_compatible_classes(classes, n):
    assert preset('vphm50', classes=classes).validate().resolve_phm_n() == n


def test_vphm_backend_rejects_29_classes():
    with pytest.raises(DivisibilityError, match='29'):
        preset('vphm50', classes=29).validate()


def test_explicit_phm_n_must_divide():
    with pytest.raises(DivisibilityError, match='d=2880'):
        preset('vphm50', phm_n=7).validate()


def test_narrow_widths_round_up_to_algebra_multiple():
    spec = preset('vect18', width_divisor=4)
    assert all(w % 3 == 0 for w in spec.stage_widths())
    spec = preset('quat18', width_divisor=16)
    assert spec.stage_widths() == (8, 16, 28, 56)


def test_stage_widths_must_divide():
    spec = ArchitectureSpec(frontend='quaternion', widths=(10, 20, 40, 80))
    with pytest.raises(DivisibilityError, match='stage1'):
        spec.validate()
    with pytest.raises(ConfigError):
        ArchitectureSpec(stem='huge').validate()


def test_forward_shape_and_finiteness(rng):
    model = narrow('qphm18', classes=100)
    logits = forward(model, Tensor(rng.normal(size=(2, 3, 8, 8))))
    assert logits.shape == (2, 100)
    assert np.all(np.isfinite(logits.data))


def test_forward_rejects_wrong_input(rng):
    model = narrow('vphm18')
    with pytest.raises(ShapeError):
        model(Tensor(rng.normal(size=(2, 3, 16, 16))))


def test_eval_forward_is_deterministic(rng):
    model = narrow('vphm18')
    x = Tensor(rng.normal(size=(4, 3, 8, 8)))
    with no_grad():
        model.train()(x)
        model.eval()
        first = model(x).data.copy()
        second = model(x).data
    np.testing.assert_array_equal(first, second)


def test_parameter_names_are_stable():
    model = narrow('qphm50')
    names = [name for name, _ in model.named_parameters()]
    assert names[0] == 'stem.r'
    assert 'stage2.block0.proj.r' in names
    assert 'stage4.block2.conv3.z' in names
    assert names[-2:] == ['head.blocks', 'head.bias']
    assert isinstance(model.stage1.block0, Bottleneck)
    assert isinstance(narrow('quat18').stage1.block0, BasicBlock)


def test_frontend_does_not_depend_on_backend():
    dense = dict(narrow('quat18').named_parameters())
    phm = dict(narrow('qphm18').named_parameters())
    shared = [name for name in dense if not name.startswith('head.')]
    assert shared and all(name in phm for name in shared)
    for name in shared:
        np.testing.assert_array_equal(dense[name].data, phm[name].data)


def test_same_seed_same_model():
    a = dict(narrow('vect18', seed=3).named_parameters())
    b = dict(narrow('vect18', seed=3).named_parameters())
    c = dict(narrow('vect18', seed=4).named_parameters())
    np.testing.assert_array_equal(a['stage3.block1.conv2.k1'].data,
                                  b['stage3.block1.conv2.k1'].data)
    assert not np.array_equal(a['stem.k0'].data, c['stem.k0'].data)


def test_quaternion_stem_pads_input_to_four_channels():
    model = narrow('quat18')
    assert model.spec.stem_channels == 4
    assert model.stem.in_channels == 4


def test_checkpoint_round_trip(tmp_path, rng):
    model = narrow('vphm18')
    x = Tensor(rng.normal(size=(2, 3, 8, 8)))
    with no_grad():
        model(x)
    path = save_checkpoint(model, tmp_path / 'model.npz')

    restored = load_checkpoint(path)
    assert restored.spec == model.spec
    for (name, a), (_, b) in zip(model.named_parameters(),
                                 restored.named_parameters()):
        np.testing.assert_array_equal(a.data, b.data, err_msg=name)
    for (_, a), (_, b) in zip(model.named_buffers(), restored.named_buffers()):
        np.testing.assert_array_equal(a.mean, b.mean)
        np.testing.assert_array_equal(a.var, b.var)
    with no_grad():
        np.testing.assert_array_equal(model.eval()(x).data,
                                      restored.eval()(x).data)


def test_checkpoint_rejects_other_models(tmp_path):
    path = save_checkpoint(narrow('vphm18'), tmp_path / 'model.npz')
    with pytest.raises(CheckpointError, match='names differ'):
        load_checkpoint(path, narrow('qphm18'))
    with pytest.raises(CheckpointError, match='shape'):
        load_checkpoint(path, narrow('vphm18', width_divisor=8))


def test_checkpoint_rejects_foreign_files(tmp_path):
    junk = tmp_path / 'junk.npz'
    junk.write_bytes(b'not a container')
    with pytest.raises(CheckpointError):
        load_checkpoint(junk)
    other = tmp_path / 'other.npz'
    np.savez(other, __format__=np.array('something-else'))
    with pytest.raises(CheckpointError, match='format'):
        load_checkpoint(other)
