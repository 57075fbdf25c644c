from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fcco import (
    ConfigError,
    CvarHinge,
    GapHinge,
    Identity,
    ScaledHinge,
    UnsupportedOperationError,
    dual_tracker_update,
    hinge_moreau_grad_closed_form,
    moreau_grad,
    moreau_value,
)
from fcco.metrics import brute_force_prox
from fcco.smoothing import make_outer, outer_to_config

CATALOG = [ScaledHinge(1.0), ScaledHinge(4.0), CvarHinge(0.25), GapHinge(0.3), Identity()]


@dataclass(frozen=True)
class ConcaveQuadratic:
    """Test-only weakly convex outer: f(z) = -rho/2 z^2."""

    rho: float
    dim: int = 1
    monotone_nondecreasing: bool = False

    @property
    def weak_convexity(self):
        return self.rho

    @property
    def lipschitz(self):
        return 10.0  # over the test range

    def value(self, t):
        return -0.5 * self.rho * float(np.atleast_1d(t)[0]) ** 2

    def prox(self, lam, t):
        return np.atleast_1d(t) / (1.0 - lam * self.rho)


def test_hinge_moreau_grad_examples():
    h = ScaledHinge(1.0)
    assert moreau_grad(h, 0.5, [-1.0])[0] == 0.0
    assert moreau_grad(h, 0.5, [0.2])[0] == pytest.approx(0.4)
    assert moreau_grad(h, 0.5, [2.0])[0] == pytest.approx(1.0)


def test_hinge_moreau_value_examples():
    h = ScaledHinge(1.0)
    assert moreau_value(h, 0.5, [-1.0]) == 0.0
    assert moreau_value(h, 0.5, [2.0]) == pytest.approx(1.75)


def test_moreau_value_small_lam_approaches_value():
    for outer in CATALOG:
        t = np.full(outer.dim, 0.7)
        lam = 1e-4
        assert abs(moreau_value(outer, lam, t) - outer.value(t)) <= lam * outer.lipschitz**2 / 2 + 1e-12


def test_hinge_closed_form_examples():
    assert hinge_moreau_grad_closed_form(-3.0, 0.1, 10.0) == 0.0
    assert hinge_moreau_grad_closed_form(0.5, 0.1, 10.0) == pytest.approx(5.0)
    assert hinge_moreau_grad_closed_form(5.0, 0.1, 10.0) == pytest.approx(10.0)


@settings(max_examples=200, deadline=None)
@given(z=st.floats(-20, 20), lam=st.floats(1e-3, 1.0), slope=st.floats(0.1, 20.0))
def test_hinge_closed_form_matches_generic_path(z, lam, slope):
    # equality up to the cancellation in (t - (t - lam*slope))/lam
    generic = moreau_grad(ScaledHinge(slope), lam, [z])[0]
    assert hinge_moreau_grad_closed_form(z, lam, slope) == pytest.approx(generic, rel=1e-9, abs=1e-12)


def test_cvar_hinge_is_scaled_hinge():
    c, s = CvarHinge(0.2), ScaledHinge(5.0)
    for t in (-1.0, 0.05, 0.4, 3.0):
        assert c.value([t]) == pytest.approx(s.value([t]))
        np.testing.assert_allclose(c.prox(0.1, [t]), s.prox(0.1, [t]))
    assert c.lipschitz == pytest.approx(5.0)


def test_identity_prox_and_envelope():
    ident = Identity()
    np.testing.assert_allclose(ident.prox(0.3, [1.0]), [0.7])
    assert moreau_value(ident, 0.3, [1.0]) == pytest.approx(1.0 - 0.15)
    assert moreau_grad(ident, 0.3, [1.0])[0] == pytest.approx(1.0)


def test_gap_hinge_inactive_region_prox_is_identity():
    g = GapHinge(0.5)
    t = np.array([0.3, 0.1])  # |gap| = 0.2 < margin
    np.testing.assert_allclose(g.prox(0.2, t), t)
    assert g.value(t) == 0.0


@settings(max_examples=100, deadline=None)
@given(
    t1=st.floats(-3, 3),
    t2=st.floats(-3, 3),
    lam=st.floats(1e-2, 1.0),
    margin=st.floats(0.0, 1.0),
)
def test_gap_hinge_prox_matches_grid_oracle(t1, t2, lam, margin):
    g = GapHinge(margin)
    t = np.array([t1, t2])
    np.testing.assert_allclose(g.prox(lam, t), brute_force_prox(g, lam, t, step=1e-5), atol=1e-5)


@settings(max_examples=150, deadline=None)
@given(
    idx=st.integers(0, len(CATALOG) - 1),
    lam=st.floats(1e-3, 1.0),
    coords=st.tuples(st.floats(-5, 5), st.floats(-5, 5)),
)
def test_sandwich_property(idx, lam, coords):
    outer = CATALOG[idx]
    t = np.array(coords[: outer.dim])
    env = moreau_value(outer, lam, t)
    val = outer.value(t)
    assert env <= val + 1e-12
    assert val <= env + lam * outer.lipschitz**2 / 2 + 1e-12


@settings(max_examples=150, deadline=None)
@given(
    idx=st.integers(0, len(CATALOG) - 1),
    lam=st.floats(1e-3, 1.0),
    a=st.tuples(st.floats(-5, 5), st.floats(-5, 5)),
    b=st.tuples(st.floats(-5, 5), st.floats(-5, 5)),
)
def test_moreau_grad_lipschitz_in_one_over_lam(idx, lam, a, b):
    outer = CATALOG[idx]
    ta, tb = np.array(a[: outer.dim]), np.array(b[: outer.dim])
    ga, gb = moreau_grad(outer, lam, ta), moreau_grad(outer, lam, tb)
    assert np.linalg.norm(ga - gb) <= np.linalg.norm(ta - tb) / lam + 1e-10


@settings(max_examples=150, deadline=None)
@given(
    idx=st.integers(0, len(CATALOG) - 1),
    lam=st.floats(1e-3, 1.0),
    coords=st.tuples(st.floats(-5, 5), st.floats(-5, 5)),
    seed=st.integers(0, 1000),
)
def test_prox_minimizes_its_objective(idx, lam, coords, seed):
    outer = CATALOG[idx]
    t = np.array(coords[: outer.dim])
    p = outer.prox(lam, t)
    obj = outer.value(p) + np.sum((p - t) ** 2) / (2 * lam)
    gen = np.random.default_rng(seed)
    for _ in range(8):
        q = p + gen.normal(size=outer.dim) * gen.uniform(1e-4, 0.5)
        assert obj <= outer.value(q) + np.sum((q - t) ** 2) / (2 * lam) + 1e-10


def test_moreau_grad_bounded_by_lipschitz():
    gen = np.random.default_rng(0)
    for outer in CATALOG:
        for _ in range(50):
            t = gen.normal(size=outer.dim) * 5
            lam = gen.uniform(1e-3, 1.0)
            assert np.linalg.norm(moreau_grad(outer, lam, t)) <= outer.lipschitz + 1e-9


def test_weakly_convex_lam_gate():
    wc = ConcaveQuadratic(rho=2.0)
    moreau_grad(wc, 0.4, [1.0])  # lam < 1/rho is fine
    with pytest.raises(ConfigError):
        moreau_grad(wc, 0.5, [1.0])
    with pytest.raises(ConfigError):
        moreau_value(wc, 0.75, [1.0])


def test_dual_tracker_full_replacement():
    u, y = dual_tracker_update(ScaledHinge(1.0), 0.1, np.array([5.0]), np.array([2.0]), 1.0)
    assert u[0] == pytest.approx(2.0)


def test_dual_tracker_example():
    u, y = dual_tracker_update(ScaledHinge(10.0), 0.1, np.array([0.0]), np.array([2.0]), 0.5)
    assert u[0] == pytest.approx(1.0)
    assert y[0] == pytest.approx(10.0)  # capped at the slope
    assert y[0] == pytest.approx(hinge_moreau_grad_closed_form(1.0, 0.1, 10.0))


def test_dual_tracker_geometric_convergence():
    outer, lam, gh = ScaledHinge(1.0), 0.2, 0.3
    u = np.array([0.0])
    target = np.array([1.5])
    for k in range(1, 41):
        u, _ = dual_tracker_update(outer, lam, u, target, gh)
        assert abs(u[0] - 1.5) == pytest.approx(1.5 * (1 - gh) ** k, rel=1e-9)


def test_dual_tracker_rejects_nonconvex_outer():
    with pytest.raises(UnsupportedOperationError):
        dual_tracker_update(ConcaveQuadratic(0.5), 0.1, np.array([0.0]), np.array([1.0]), 0.5)


def test_catalog_serialization_round_trip():
    for outer in CATALOG:
        kind, param = outer_to_config(outer)
        clone = make_outer(kind, param)
        assert type(clone) is type(outer)
        t = np.full(outer.dim, 0.4)
        assert clone.value(t) == outer.value(t)


def test_make_outer_rejects_unknown_kind():
    with pytest.raises(ConfigError):
        make_outer("soft_hinge")


def test_gap_hinge_prox_at_region_boundaries():
    # points sitting exactly on the dead-zone and clamp-band boundaries
    margin, lam = 0.3, 0.2
    g = GapHinge(margin)
    width = lam * np.sqrt(2.0)
    inv = 1.0 / np.sqrt(2.0)
    for b in (0.0, -1.3, 2.1):
        for a in (margin * inv, -margin * inv, margin * inv + width, -(margin * inv + width), 0.0):
            t = np.array([(a + b) * inv, (b - a) * inv])
            closed = g.prox(lam, t)
            grid = brute_force_prox(g, lam, t, step=1e-5)
            np.testing.assert_allclose(closed, grid, atol=2e-5)


def test_hinge_prox_at_kink_points():
    h = ScaledHinge(3.0)
    for lam in (1e-3, 0.25, 1.0):
        for t in (0.0, lam * 3.0):
            np.testing.assert_allclose(
                h.prox(lam, [t]), brute_force_prox(h, lam, np.array([t]), step=1e-5), atol=1e-5
            )
