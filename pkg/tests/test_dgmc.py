import heapq

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ctstereo.core import BorderError, EmptyDomain, NoBoundary
from ctstereo.dgmc import (
    CurvatureDescriptor,
    HighlightRegion,
    curvature_descriptor,
    curvature_maps,
    detect_specular_mask,
    dgmc_initialization,
    dgmc_seed,
    dijkstra_nearest,
    extract_boundary,
    similar,
)


def _brute_force(domain, src):
    """Textbook heap Dijkstra over the 8-connected pixel graph."""
    H, W = domain.shape
    dist = {src: 0.0}
    heap = [(0.0, src)]
    while heap:
        d, (r, c) = heapq.heappop(heap)
        if d > dist[(r, c)]:
            continue
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                q = (r + dr, c + dc)
                if (dr or dc) and 0 <= q[0] < H and 0 <= q[1] < W and domain[q]:
                    nd = d + (np.sqrt(2.0) if dr and dc else 1.0)
                    if nd < dist.get(q, np.inf):
                        dist[q] = nd
                        heapq.heappush(heap, (nd, q))
    return dist


def test_specular_mask_examples():
    assert not detect_specular_mask([np.full((8, 8), 0.3)] * 3).any()
    im = np.full((10, 10), 0.1)
    im[4, 6] = 1.0
    m = detect_specular_mask([im, im * 0.5, im * 0.5], 95)
    assert m.sum() == 1 and m[4, 6]


def test_boundary_examples():
    m = np.zeros((10, 10), bool)
    m[3:6, 3:6] = True
    region = extract_boundary(m)
    assert len(region.boundary) == 16
    assert not (region.boundary_mask & m).any()
    one = np.zeros((10, 10), bool)
    one[0, 5] = True
    assert len(extract_boundary(one).boundary) == 5  # clipped at the image edge
    with pytest.raises(EmptyDomain):
        extract_boundary(np.zeros((4, 4), bool))
    with pytest.raises(NoBoundary):
        extract_boundary(np.ones((4, 4), bool))


def test_dijkstra_examples():
    m = np.zeros((9, 9), bool)
    m[4, 2:7] = True  # a straight corridor of highlight
    region = extract_boundary(m)
    cands = dijkstra_nearest((4, 4), region)
    (q, d) = cands[0]
    assert d == 1.0 and q == (3, 4)  # (3,4) and (5,4) tie; lower row-major index wins
    assert cands[1] == ((5, 4), 1.0)
    # distances along the corridor
    far = dict(cands)
    assert far[(4, 7)] == pytest.approx(3.0)
    assert far[(3, 7)] == pytest.approx(2 + np.sqrt(2))


@settings(max_examples=30, deadline=None)
@given(arrays(bool, (12, 12), elements=st.booleans()), st.data())
def test_dijkstra_matches_brute_force(mask, data):
    if not mask.any() or mask.all():
        return
    region = extract_boundary(mask)
    spec = [tuple(p) for p in np.argwhere(mask)]
    p = data.draw(st.sampled_from(spec))
    domain = mask | region.boundary_mask
    ref = _brute_force(domain, p)
    for q, d in dijkstra_nearest(p, region):
        if q in ref:
            assert d == pytest.approx(ref[q], abs=1e-12)
        else:  # unreachable: Euclidean fallback
            assert d == pytest.approx(np.hypot(q[0] - p[0], q[1] - p[1]))


def test_dijkstra_unreachable_fall_back_after_reachable():
    m = np.zeros((12, 12), bool)
    m[2, 2] = True
    m[9, 9] = True
    region = extract_boundary(m)
    cands = dijkstra_nearest((2, 2), region)
    near = [(1, 2), (2, 1), (2, 3), (3, 2), (1, 1), (1, 3), (3, 1), (3, 3)]
    assert [q for q, _ in cands[:8]] == near
    assert all(max(abs(q[0] - 9), abs(q[1] - 9)) == 1 for q, _ in cands[8:])


def _grid(n=15):
    y, x = np.mgrid[0:n, 0:n].astype(float)
    return x - n // 2, y - n // 2


@pytest.mark.parametrize("kind,gc,mc", [("flat", 0, 0), ("bowl", 4, 2), ("saddle", -4, 0)])
def test_curvature_descriptor_examples(kind, gc, mc):
    x, y = _grid()
    img = {"flat": np.full(x.shape, 0.4), "bowl": x**2 + y**2, "saddle": x**2 - y**2}[kind]
    d = curvature_descriptor((7, 7), img, 5)
    assert d.gc == pytest.approx(gc, abs=1e-9) and d.mc == pytest.approx(mc, abs=1e-9)
    gcm, mcm = curvature_maps(img, 5)
    assert gcm[7, 7] == pytest.approx(gc, abs=1e-9) and mcm[7, 7] == pytest.approx(mc, abs=1e-9)
    assert np.isnan(gcm[0, 0]) and np.isnan(mcm[14, 14])


def test_curvature_descriptor_border_and_window():
    with pytest.raises(BorderError):
        curvature_descriptor((1, 7), np.zeros((15, 15)), 5)
    with pytest.raises(ValueError):
        curvature_descriptor((7, 7), np.zeros((15, 15)), 4)


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_descriptor_invariants(a, b):
    d = CurvatureDescriptor(a, b)
    assert d.k1 <= d.k2
    assert d.gc == d.k1 * d.k2 and d.mc == (d.k1 + d.k2) / 2


def test_similarity_rule():
    p = CurvatureDescriptor(1.0, 3.0)  # gc 3, mc 2
    assert similar(CurvatureDescriptor(1.0, 3.0), p)
    # 4% larger GC at equal MC
    k1, k2 = np.roots([1, -4.0, 3.12])
    assert similar(CurvatureDescriptor(k1, k2), p)
    assert not similar(CurvatureDescriptor(1.0, 3.4), p)
    assert similar(CurvatureDescriptor(0.0, 0.0), CurvatureDescriptor(0.0, 5e-7))


def _seed_setup():
    spec = np.zeros((9, 9), bool)
    spec[4, 4] = True
    region = extract_boundary(spec)
    gc = np.full((9, 9), 9.0)
    mc = np.full((9, 9), 9.0)
    grads = np.zeros((9, 9, 2))
    for k, q in enumerate(region.boundary):
        grads[q] = (k, -k)
    return region, gc, mc, grads


def test_seed_examples():
    region, gc, mc, grads = _seed_setup()
    # flat p, flat nearest rim pixel: absolute-floor acceptance
    gc[4, 4] = mc[4, 4] = 0.0
    gc[3, 3] = mc[3, 3] = 0.0
    s = dgmc_seed((4, 4), region, None, grads, curv=(gc, mc))
    assert s.matched and s.source == (3, 3)
    # a farther rim pixel with GC 4% off wins over dissimilar nearer ones
    gc[4, 4], mc[4, 4] = 2.0, 1.0
    gc[3, 3] = mc[3, 3] = 9.0
    gc[5, 5], mc[5, 5] = 2.08, 1.0
    s = dgmc_seed((4, 4), region, None, grads, curv=(gc, mc))
    assert s.matched and s.source == (5, 5)
    assert np.array_equal(s.gradient, grads[5, 5])
    # nothing within 5%: nearest rim pixel, flagged
    gc[5, 5] = 2.2
    s = dgmc_seed((4, 4), region, None, grads, curv=(gc, mc))
    assert not s.matched and s.source == (3, 4)


def test_seed_independent_of_boundary_order():
    region, gc, mc, grads = _seed_setup()
    gc[4, 4], mc[4, 4] = 1.0, 1.0
    gc[3, 5] = mc[3, 5] = 1.0
    gc[5, 3] = mc[5, 3] = 1.0
    a = dgmc_seed((4, 4), region, None, grads, curv=(gc, mc))
    rev = HighlightRegion(region.specular_mask, tuple(reversed(region.boundary)))
    b = dgmc_seed((4, 4), rev, None, grads, curv=(gc, mc))
    assert a.source == b.source == (3, 5)


def test_initialization_on_shiny_sphere(shiny_sphere):
    mat, s, K, lights, images = shiny_sphere
    res = dgmc_initialization(images, lights, K, 2.0, s.mask)
    assert res.specular_mask.any()
    assert res.seeds.shape == s.mask.shape + (2,)
    assert np.all(np.isfinite(res.seeds))
    again = dgmc_initialization(images, lights, K, 2.0, s.mask)
    assert np.array_equal(res.seeds, again.seeds)
