"""Case-file parsing, validation, and document round-trips."""

import math

import numpy as np
import pytest

from feaspath.cases import (BusKind, FeasiblePath, PathIteration,
                            load_case, parse_case, read_path, write_case,
                            write_path)
from feaspath.errors import (CaseParseError, CaseValidationError,
                             UnsupportedCostError)

from conftest import case_path


def test_case3_shape():
    net = load_case(case_path("pglib_opf_case3_lmbd"))
    assert net.n_bus == 3
    assert net.n_gen == 3
    assert net.n_branch == 3
    assert net.buses[0].kind == BusKind.SLACK
    # per-unit conversion on a 100 MVA base
    assert net.buses[0].p_load == pytest.approx(1.10)
    assert net.generators[0].p_max == pytest.approx(20.0)
    # cost polynomial rescaled to per-unit power: c(p_pu) in currency/h
    assert net.generators[0].cost_value(1.0) == pytest.approx(
        0.11 * 100.0**2 + 5.0 * 100.0
    )


def test_two_bus_matches_reference_model():
    net = load_case(case_path("case2"))
    assert net.n_bus == 2
    br = net.branches[0]
    assert br.y == pytest.approx(-1j)
    assert net.buses[1].v_min == pytest.approx(0.9)
    assert net.buses[1].v_max == pytest.approx(1.1)
    # zero angle limits in the file are replaced by the +/-60 deg default
    assert br.phi_min == pytest.approx(-math.pi / 3)
    assert br.phi_max == pytest.approx(math.pi / 3)


def test_out_of_service_dropped():
    text = """
function mpc = t
mpc.baseMVA = 100;
mpc.bus = [
 1 3 0 0 0 0 1 1 0 100 1 1.1 0.9;
 2 1 10 5 0 0 1 1 0 100 1 1.1 0.9;
 3 1 0 0 0 0 1 1 0 100 1 1.1 0.9;
];
mpc.gen = [
 1 0 0 100 -100 1.0 100 1 100 0;
 3 0 0 100 -100 1.0 100 0 100 0;
];
mpc.branch = [
 1 2 0.01 0.1 0 0 0 0 0 0 1 0 0;
 2 3 0.01 0.1 0 0 0 0 0 0 1 0 0;
 1 3 0.01 0.1 0 0 0 0 0 0 0 0 0;
];
"""
    net = parse_case(text)
    assert net.n_gen == 1
    assert net.n_branch == 2


def test_zero_branches_rejected():
    text = """
function mpc = t
mpc.baseMVA = 100;
mpc.bus = [
 1 3 0 0 0 0 1 1 0 100 1 1.1 0.9;
];
mpc.gen = [
 1 0 0 100 -100 1.0 100 1 100 0;
];
mpc.branch = [
];
"""
    with pytest.raises(CaseValidationError, match="branches"):
        parse_case(text)


def test_disconnected_rejected():
    text = """
function mpc = t
mpc.baseMVA = 100;
mpc.bus = [
 1 3 0 0 0 0 1 1 0 100 1 1.1 0.9;
 2 1 1 0 0 0 1 1 0 100 1 1.1 0.9;
 3 1 1 0 0 0 1 1 0 100 1 1.1 0.9;
 4 1 1 0 0 0 1 1 0 100 1 1.1 0.9;
];
mpc.gen = [
 1 0 0 100 -100 1.0 100 1 100 0;
];
mpc.branch = [
 1 2 0.01 0.1 0 0 0 0 0 0 1 0 0;
 3 4 0.01 0.1 0 0 0 0 0 0 1 0 0;
];
"""
    with pytest.raises(CaseValidationError, match="connected"):
        parse_case(text)


def test_duplicate_slack_rejected(any_case_name, cases_dir):
    text = (cases_dir / f"{any_case_name}.m").read_text()
    # flip the first PQ/PV bus row into a second slack bus
    lines = text.split("\n")
    in_bus = False
    for i, line in enumerate(lines):
        if "mpc.bus" in line:
            in_bus = True
            continue
        if in_bus and line.strip() and not line.strip().startswith("]"):
            cols = line.split()
            if cols[1] in ("1", "2"):
                cols[1] = "3"
                lines[i] = "\t" + " ".join(cols)
                break
    mutated = "\n".join(lines)
    with pytest.raises(CaseValidationError, match="slack"):
        parse_case(mutated)


def test_every_fixture_parses(any_case_name, cases_dir):
    net = load_case(cases_dir / f"{any_case_name}.m")
    assert net.n_bus >= 2
    assert len(net.buses_of_kind(BusKind.SLACK)) == 1


def test_malformed_row_reports_line():
    text = """function mpc = t
mpc.baseMVA = 100;
mpc.bus = [
 1 3 0 0 0 0 1 1 0 100 1 1.1 0.9;
 2 1 oops 0 0 0 1 1 0 100 1 1.1 0.9;
];
mpc.gen = [ 1 0 0 1 -1 1.0 100 1 1 0; ];
mpc.branch = [ 1 2 0 0.1 0 0 0 0 0 0 1 0 0; ];
"""
    with pytest.raises(CaseParseError, match="line 5"):
        parse_case(text)


def test_piecewise_cost_rejected():
    text = """function mpc = t
mpc.baseMVA = 100;
mpc.bus = [
 1 3 0 0 0 0 1 1 0 100 1 1.1 0.9;
 2 1 1 0 0 0 1 1 0 100 1 1.1 0.9;
];
mpc.gen = [ 1 0 0 1 -1 1.0 100 1 1 0; ];
mpc.gencost = [ 1 0 0 2 0 0 100 50; ];
mpc.branch = [ 1 2 0 0.1 0 0 0 0 0 0 1 0 0; ];
"""
    with pytest.raises(UnsupportedCostError):
        parse_case(text)


def test_missing_gencost_defaults_to_uniform_linear():
    text = """function mpc = t
mpc.baseMVA = 100;
mpc.bus = [
 1 3 0 0 0 0 1 1 0 100 1 1.1 0.9;
 2 1 1 0 0 0 1 1 0 100 1 1.1 0.9;
];
mpc.gen = [ 1 0 0 1 -1 1.0 100 1 1 0; ];
mpc.branch = [ 1 2 0 0.1 0 0 0 0 0 0 1 0 0; ];
"""
    net = parse_case(text)
    # uniform linear: cost(p_pu) = p_mw
    assert net.generators[0].cost_value(0.5) == pytest.approx(50.0)


def test_fixed_reactive_folds_into_load():
    text = """function mpc = t
mpc.baseMVA = 100;
mpc.bus = [
 1 3 0 0 0 0 1 1 0 100 1 1.1 0.9;
 2 2 10 5 0 0 1 1 0 100 1 1.1 0.9;
];
mpc.gen = [
 1 0 0 100 -100 1.0 100 1 100 0;
 2 0 20 20 20 1.0 100 1 50 0;
];
mpc.branch = [ 1 2 0 0.1 0 0 0 0 0 0 1 0 0; ];
"""
    net = parse_case(text)
    assert net.buses[1].kind == BusKind.PV
    assert net.buses[1].q_load == pytest.approx(0.05 - 0.20)
    g = net.generators[1]
    assert g.q_min == g.q_max == 0.0


def test_per_unit_idempotence(any_case_name, cases_dir):
    net1 = load_case(cases_dir / f"{any_case_name}.m")
    net2 = parse_case(write_case(net1), name=net1.name)
    assert net1 == net2
    assert write_case(net1) == write_case(net2)


def test_path_round_trip():
    path = FeasiblePath(
        case_name="case2",
        control_names=("v_bus1",),
        iterations=(
            PathIteration(u=np.array([1.0]), objective=3.5, step_norm=0.0),
            PathIteration(u=np.array([1.02]), objective=3.1, step_norm=0.02),
        ),
        termination="step_norm",
        certificates=({"segment": 0, "worst_margin": 0.2},),
        stats={"solve_seconds": 0.1},
    )
    text = write_path(path)
    back = read_path(text)
    assert back.case_name == path.case_name
    assert back.termination == "step_norm"
    assert back.n_segments == 1
    for a, b in zip(back.setpoints, path.setpoints):
        assert np.array_equal(a, b)
    # stats live outside the deterministic body: identical up to stats
    assert write_path(back).replace('"solve_seconds": 0.1', "X") != ""


def test_single_point_path_document():
    path = FeasiblePath(
        case_name="c", control_names=("u0",),
        iterations=(PathIteration(u=np.array([0.0]), objective=1.0,
                                  step_norm=0.0),),
        termination="converged",
    )
    doc = write_path(path)
    assert '"n_segments": 0' in doc
    assert read_path(doc).n_segments == 0
