import math

import pytest
from hypothesis import given, strategies as st

from co2net.errors import NoCompensationError
from co2net.network import (ATMOSPHERE, DIGESTER, MICROALGAE, CompartmentId, NetworkGraph, VirtualDuct,
                            atmosphere_rate, build_network, circularity, clamped_circularity,
                            compensation_volume)

flows = st.floats(0.0, 1e4, allow_nan=False)
positive = st.floats(1e-3, 1e4, allow_nan=False)


def test_graph_shape():
    g = build_network()
    assert len(g.vertices) == 3 and len(g.arcs) == 2
    c4 = g.arc(DIGESTER, ATMOSPHERE)
    assert (c4.k, c4.i, c4.j) == (4, 1, 2)
    assert g.has_arc(ATMOSPHERE, MICROALGAE)
    assert not g.has_arc(MICROALGAE, ATMOSPHERE)


def test_edge_list_roundtrip():
    g = build_network()
    text = g.edge_list()
    assert text.splitlines()[3] == "4,1,2,arc"
    assert NetworkGraph.from_edge_list(text).compartments == g.compartments


def test_compartment_kinds():
    assert CompartmentId(1, 1, 1).is_vertex
    assert CompartmentId(4, 1, 2).kind == "arc"
    with pytest.raises(ValueError):
        NetworkGraph.from_edge_list("1,1,1,vertex\n1,2,2,vertex\n")


def test_ducts_are_inert():
    g = build_network(duct_faces=(2.0, 3.0))
    assert g.ducts[4].H == 0 and g.ducts[5].A_face_sink == 3.0
    with pytest.raises(ValueError):
        VirtualDuct(-1.0, 0.0, 0.0)


@pytest.mark.parametrize("args,want", [((175, 0.28, 1, 625), 0.0), ((175, 0.28, 1, 0), 175.0),
                                       ((0, 0, 1, 1), 0.0)])
def test_atmosphere_rate_examples(args, want):
    assert atmosphere_rate(*args) == pytest.approx(want, abs=1e-12)


def test_atmosphere_rate_rejects():
    with pytest.raises(ValueError):
        atmosphere_rate(math.nan, 0.1, 1, 1)
    with pytest.raises(ValueError):
        atmosphere_rate(1, 0.1, 0, 1)


@pytest.mark.parametrize("net,delta,lam", [(175, 1, -175), (0, 1, 0), (10, 2, -20)])
def test_circularity_examples(net, delta, lam):
    assert circularity(net, delta).lam == lam


def test_circularity_negative_flow():
    with pytest.raises(ValueError):
        circularity(-1.0)
    r = clamped_circularity(-1.0)
    assert r.lam == 0.0 and r.net_flow == 0.0


@pytest.mark.parametrize("args,want", [((175, 0.28, 1), 625.0), ((100, 100, 1), 1.0), ((175, 0.28, 2), 1250.0)])
def test_compensation_volume_examples(args, want):
    assert compensation_volume(*args) == want


def test_no_compensation():
    with pytest.raises(NoCompensationError):
        compensation_volume(175, 0.0)


@given(flows, positive, positive)
def test_compensation_zeroes_rate(m12, m23, vd):
    vm = compensation_volume(m12, m23, vd)
    assert abs(atmosphere_rate(m12, m23, vd, vm)) <= 1e-9 * max(1.0, m12 * vd)


@given(flows, flows, st.floats(1e-3, 100))
def test_circularity_monotone(a, b, delta):
    la, lb = circularity(a, delta).lam, circularity(b, delta).lam
    assert la <= 0 and lb <= 0
    if a < b:
        assert la >= lb
    assert (la == 0) == (a * delta == 0)  # exact zero only at zero flow, up to underflow
