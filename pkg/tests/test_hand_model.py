import numpy as np
import pytest
import torch

from graspkit.hand_model import (HandModelError, LbsModel, axis_angle_to_matrix, default_hand_model, lbs_forward,
                                 lbs_torch, load_external_model, resolve_model, save_model, wrap_axis_angle)


def _arrays(model):
    return {k: np.array(getattr(model, k)) for k in ("template", "parents", "regressor", "weights",
                                                      "blendshapes", "faces")}


def test_default_model_deterministic_and_normalized(full_model):
    again = default_hand_model.__wrapped__(778, 16, 7)
    for k, v in _arrays(full_model).items():
        np.testing.assert_array_equal(v, getattr(again, k))
    assert np.abs(full_model.weights.sum(axis=1) - 1).max() < 1e-12
    assert full_model.n_vertices == 778 and full_model.n_joints == 16 and full_model.n_shape == 10
    assert full_model.mesh(full_model.template).is_watertight


def test_default_model_structure(full_model):
    children = full_model.children
    assert len(children[0]) == 5
    assert int((full_model.parents >= 0).sum()) == 15
    for c in children[0]:
        chain = [c]
        while children[chain[-1]]:
            assert len(children[chain[-1]]) == 1
            chain.append(children[chain[-1]][0])
        assert len(chain) == 3


@pytest.mark.parametrize("n,j", [(10, 4), (40, 3)])
def test_default_model_degenerate_counts(n, j):
    with pytest.raises(HandModelError):
        default_hand_model.__wrapped__(n, j, 0)


def test_identity_and_translation(mini_model):
    beta = np.zeros(mini_model.n_shape)
    out = lbs_forward(mini_model, beta, np.zeros(mini_model.pose_dim))
    np.testing.assert_allclose(out.vertices, mini_model.template, atol=1e-12)
    theta = np.zeros(mini_model.pose_dim)
    theta[:3] = [0.1, -0.2, 0.3]
    out = lbs_forward(mini_model, beta, theta)
    np.testing.assert_allclose(out.vertices, mini_model.template + theta[:3], atol=1e-12)


def test_dimension_mismatch(mini_model):
    with pytest.raises(HandModelError):
        lbs_forward(mini_model, np.zeros(3), np.zeros(mini_model.pose_dim))
    with pytest.raises(HandModelError):
        lbs_forward(mini_model, np.zeros(10), np.zeros(5))


def test_rigid_invariance(mini_model, rng):
    beta = rng.normal(size=10) * 0.3
    rest = lbs_forward(mini_model, beta, np.zeros(mini_model.pose_dim))
    r = rng.normal(size=3)
    theta = np.zeros(mini_model.pose_dim)
    theta[3:6] = r
    R = axis_angle_to_matrix(torch.tensor(r)).numpy()
    root = rest.joints[0]
    out = lbs_forward(mini_model, beta, theta)
    np.testing.assert_allclose(out.vertices, (rest.vertices - root) @ R.T + root, atol=1e-9)


def test_descendant_rotation_leaves_joint(mini_model, rng):
    beta = np.zeros(10)
    theta = rng.normal(size=mini_model.pose_dim) * 0.2
    base = lbs_forward(mini_model, beta, theta).joints
    j = mini_model.children[0][0]
    child = mini_model.children[j][0]
    moved = theta.copy()
    moved[3 + 3 * child:6 + 3 * child] += 0.4
    after = lbs_forward(mini_model, beta, moved).joints
    np.testing.assert_allclose(after[j], base[j], atol=1e-12)
    np.testing.assert_allclose(after[child], base[child], atol=1e-12)   # rotates about itself


def test_lbs_gradient_finite_difference(mini_model, rng):
    beta = torch.tensor(rng.normal(size=10) * 0.1, requires_grad=True)
    theta = torch.tensor(rng.normal(size=mini_model.pose_dim) * 0.2, requires_grad=True)
    jac_t = torch.autograd.functional.jacobian(lambda t: lbs_torch(mini_model, beta.detach(), t)[0], theta)
    h = 1e-5
    worst = 0.0
    with torch.no_grad():
        for k in range(theta.numel()):
            e = torch.zeros_like(theta)
            e[k] = h
            num = (lbs_torch(mini_model, beta, theta + e)[0] - lbs_torch(mini_model, beta, theta - e)[0]) / (2 * h)
            ana = jac_t[..., k]
            scale = torch.maximum(ana.abs(), num.abs()).clamp_min(1e-6 * float(num.abs().max()) + 1e-300)
            worst = max(worst, float(((ana - num).abs() / scale).max()))
    assert worst < 1e-3


def test_axis_angle_small_angle_smooth():
    r = torch.tensor([1e-9, -2e-9, 0.5e-9], dtype=torch.float64, requires_grad=True)
    R = axis_angle_to_matrix(r)
    assert torch.isfinite(R).all()
    (g,) = torch.autograd.grad(R.sum(), r)
    assert torch.isfinite(g).all()


def test_wrap_axis_angle():
    r = np.array([[0.0, 0.0, 3 * np.pi / 2]])
    w = wrap_axis_angle(r)
    assert np.linalg.norm(w) < np.pi
    Ra = axis_angle_to_matrix(torch.tensor(r)).numpy()
    Rb = axis_angle_to_matrix(torch.tensor(w)).numpy()
    np.testing.assert_allclose(Ra, Rb, atol=1e-12)


def test_model_roundtrip(tmp_path, mini_model):
    save_model(mini_model, tmp_path / "m.gkm")
    back = load_external_model(tmp_path / "m.gkm")
    for k, v in _arrays(mini_model).items():
        np.testing.assert_array_equal(v, getattr(back, k))
    assert resolve_model(str(tmp_path / "m.gkm")).n_vertices == 64


def test_model_invariant_errors(mini_model):
    arrays = _arrays(mini_model)
    bad = dict(arrays)
    w = bad["weights"].copy()
    w[0] *= 0.9
    bad["weights"] = w
    with pytest.raises(HandModelError, match="skinning weights not normalized"):
        LbsModel(**bad)
    bad = dict(arrays)
    p = bad["parents"].copy()
    p[1], p[2] = 2, 1
    bad["parents"] = p
    with pytest.raises(HandModelError, match="kinematic tree has a cycle"):
        LbsModel(**bad)
    bad = dict(arrays)
    r = bad["regressor"].copy()
    r[0] *= 2
    bad["regressor"] = r
    with pytest.raises(HandModelError, match="joint regressor rows not normalized"):
        LbsModel(**bad)


def test_external_file_with_bad_weights(tmp_path, mini_model):
    from graspkit import container
    arrays = _arrays(mini_model)
    arrays["weights"][3] *= 0.9
    container.write(tmp_path / "bad.gkm", "lbs_model", 1, arrays, {"n_vertices": 64})
    with pytest.raises(HandModelError, match="skinning weights not normalized"):
        load_external_model(tmp_path / "bad.gkm")
    del arrays["faces"]
    container.write(tmp_path / "missing.gkm", "lbs_model", 1, arrays, {})
    with pytest.raises(HandModelError, match="missing fields"):
        load_external_model(tmp_path / "missing.gkm")
