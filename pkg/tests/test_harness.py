"""Case files, state dumps, run metrics, and the command-line front end."""

import io
import struct

import numpy as np
import pytest

from wcnsflow.cases import (Case, case_from_text, case_plan, case_to_text,
                            corner_case, exact_density, generate_case,
                            initial_fields, load_case, save_case, sod_case,
                            uniform_case, wave_case, with_load_ratio)
from wcnsflow.cli import main
from wcnsflow.dumps import merge_dumps, read_dump, write_dump, zone_array
from wcnsflow.errors import CaseFormatError
from wcnsflow.metrics import (RunMetrics, from_timeline, mcups,
                              metrics_from_csv, metrics_to_csv, render_report)
from wcnsflow.partition import NodeTopology
from wcnsflow.schedule import Interval, Timeline


def small_corner(**kw):
    """Corner case small enough that every block still fits the stencil."""
    kw.setdefault("nodes", 1)
    kw.setdefault("columns", 40)
    kw.setdefault("cross", 6)
    kw.setdefault("max_iters", 2)
    return corner_case(**kw)


# ---------------------------------------------------------------------------
# Case files

@pytest.mark.parametrize("case", [
    uniform_case((8, 12, 10), reynolds=150.0, blocks=4),
    wave_case(16, wavevector=(2, 1, 0), amplitude=0.15, t_end=0.01,
              fixed_dt=2.5e-4, blocks=2),
    sod_case(nx=32, cross=4, t_end=0.1),
    small_corner(load_ratio=0.6),
], ids=["uniform", "wave", "sod", "corner"])
def test_case_text_roundtrip(case):
    assert case_from_text(case_to_text(case)) == case


def test_case_text_header_and_comments():
    text = case_to_text(uniform_case())
    assert text.splitlines()[0] == "wcnsflow-case 1"
    noisy = "# a comment\n\n" + text + "\n# trailing\n"
    assert case_from_text(noisy) == uniform_case()


def test_case_file_roundtrip_on_disk(tmp_path):
    case = wave_case(8, t_end=0.002, fixed_dt=1e-3)
    path = tmp_path / "wave.case"
    save_case(case, path)
    assert load_case(path) == case


def test_case_text_rejects_bad_input():
    good = case_to_text(uniform_case())
    with pytest.raises(CaseFormatError, match="not a case file"):
        case_from_text(good.replace("wcnsflow-case", "other-format"))
    with pytest.raises(CaseFormatError, match="version"):
        case_from_text(good.replace("wcnsflow-case 1", "wcnsflow-case 9"))
    with pytest.raises(CaseFormatError, match="empty"):
        case_from_text("# only comments\n")
    with pytest.raises(CaseFormatError, match="missing records"):
        case_from_text("wcnsflow-case 1\nname partial\n")
    with pytest.raises(CaseFormatError, match="unknown case record"):
        case_from_text(good + "mystery a=1\n")


def test_case_validation():
    base = uniform_case()
    with pytest.raises(CaseFormatError, match="unknown case kind"):
        Case(name="x", kind="vortex", gas=base.gas, zones=base.zones,
             init={}, freestream=base.freestream, controls=base.controls)
    with pytest.raises(CaseFormatError, match="freestream"):
        Case(name="x", kind="uniform", gas=base.gas, zones=base.zones,
             init={}, freestream=(1.0, 0.0, 0.0), controls=base.controls)


def test_generate_case_dispatch():
    assert generate_case("sod", nx=24).zone.shape == (24, 4, 4)
    assert generate_case("wave", n=8).kind == "wave"
    with pytest.raises(CaseFormatError, match="unknown case kind"):
        generate_case("blast")


def test_corner_layout():
    case = small_corner(load_ratio=0.75)
    # one x-slab per node, one block per device: 2 cpu + 3 coproc
    axis, widths = case.cuts
    assert axis == 0
    assert len(widths) == 5
    assert sum(widths) == 40
    # edge (cpu) blocks are wider than the ratio-0.75 middle blocks
    assert widths[0] > widths[2] and widths[-1] > widths[2]
    assert case.zone.cells == 40 * 6 * 6
    with pytest.raises(CaseFormatError, match="2 CPU sockets"):
        corner_case(nodes=1, topology=NodeTopology(1, 1, 3))


def test_with_load_ratio_recuts_corner():
    case = small_corner(load_ratio=0.75)
    heavier = with_load_ratio(case, 1.2)
    assert heavier.load_ratio == 1.2
    assert heavier.name.endswith("-r1.2")
    _, widths = heavier.cuts
    assert sum(widths) == 40
    assert widths != case.cuts[1]
    # middle blocks gain cells when the coprocessor ratio rises
    assert widths[2] > case.cuts[1][2]


def test_with_load_ratio_plain_case():
    case = uniform_case()
    tuned = with_load_ratio(case, 0.5)
    assert tuned.load_ratio == 0.5 and tuned.cuts is None
    assert tuned.zone == case.zone


# ---------------------------------------------------------------------------
# Initial and exact states

def test_sod_initial_states():
    case = sod_case(nx=16, cross=4)
    fields = initial_fields(case, case_plan(case))
    (f,) = fields.values()
    q = f.interior
    # x < 0.5: rho=1, p=1 -> E=2.5; x > 0.5: rho=0.125, p=0.1 -> E=0.25
    left, right = q[:, :8], q[:, 8:]
    assert np.all(left[0] == 1.0) and np.all(right[0] == 0.125)
    assert np.all(q[1:4] == 0.0)
    np.testing.assert_allclose(left[4], 2.5, rtol=1e-15)
    np.testing.assert_allclose(right[4], 0.25, rtol=1e-15)


def test_wave_exact_density_translates():
    case = wave_case(8)
    plan = case_plan(case)
    d0 = exact_density(case, plan, 0.0)[0]
    assert d0.shape == (8, 8, 8)
    # wavevector (1,1,1) dot velocity (1,1,1) = 3, so period is 1/3
    d1 = exact_density(case, plan, 1.0 / 3.0)[0]
    np.testing.assert_allclose(d1, d0, rtol=0, atol=1e-12)
    x = (np.arange(8)[:, None, None] + 0.5) / 8.0
    y = np.swapaxes(x, 0, 1)
    z = np.swapaxes(x, 0, 2)
    expect = 1.0 + 0.2 * np.sin(2.0 * np.pi * (x + y + z))
    np.testing.assert_allclose(d0, expect, rtol=0, atol=1e-15)


def test_exact_density_only_for_closed_forms():
    case = sod_case(nx=16)
    with pytest.raises(CaseFormatError, match="no exact solution"):
        exact_density(case, case_plan(case), 0.1)


def test_uniform_freestream_conserved():
    case = uniform_case(velocity=(0.3, -0.2, 0.1))
    q = case.freestream_conserved()
    e = 1.0 / 0.4 + 0.5 * (0.3 ** 2 + 0.2 ** 2 + 0.1 ** 2)
    np.testing.assert_allclose(q, [1.0, 0.3, -0.2, 0.1, e], rtol=1e-15)


def test_initial_fields_respects_block_filter():
    case = wave_case(8, blocks=4)
    plan = case_plan(case)
    some = {b.id for b in plan.blocks[:2]}
    fields = initial_fields(case, plan, block_ids=some)
    assert set(fields) == some


# ---------------------------------------------------------------------------
# Dumps

def test_dump_roundtrip_bitwise(tmp_path):
    case = wave_case(8, blocks=2)
    fields = initial_fields(case, case_plan(case))
    path = tmp_path / "state.bin"
    write_dump(path, fields)
    back = read_dump(path)
    assert sorted(back) == sorted(fields)
    for bid, f in fields.items():
        assert back[bid].dtype == np.float64
        assert np.array_equal(back[bid], f.interior)


def test_dump_rejects_foreign_and_truncated_files(tmp_path):
    bogus = tmp_path / "nope.bin"
    bogus.write_bytes(b"NOTADUMP" + b"\0" * 16)
    with pytest.raises(CaseFormatError, match="not a dump file"):
        read_dump(bogus)

    stale = tmp_path / "stale.bin"
    stale.write_bytes(b"WCNSDUMP" + struct.pack("<II", 9, 0))
    with pytest.raises(CaseFormatError, match="version"):
        read_dump(stale)

    case = wave_case(8)
    path = tmp_path / "cut.bin"
    write_dump(path, initial_fields(case, case_plan(case)))
    whole = path.read_bytes()
    path.write_bytes(whole[:len(whole) // 2])
    with pytest.raises(CaseFormatError, match="truncated block"):
        read_dump(path)


def test_merge_dumps():
    a = {0: np.zeros((5, 1, 1, 1))}
    b = {1: np.ones((5, 1, 1, 1))}
    merged = merge_dumps([a, b])
    assert sorted(merged) == [0, 1]
    with pytest.raises(CaseFormatError, match="duplicate block"):
        merge_dumps([a, a])


def test_zone_array_assembly_matches_single_block(tmp_path):
    split = wave_case(8, blocks=8)
    plan = case_plan(split)
    path = tmp_path / "parts.bin"
    write_dump(path, initial_fields(split, plan))
    assembled = zone_array(read_dump(path), plan)

    whole = wave_case(8, blocks=1)
    (f,) = initial_fields(whole, case_plan(whole)).values()
    assert np.array_equal(assembled, f.interior)


def test_zone_array_rejects_bad_dumps():
    case = wave_case(8, blocks=2)
    plan = case_plan(case)
    fields = initial_fields(case, plan)
    dump = {bid: np.asarray(f.interior) for bid, f in fields.items()}

    partial = dict(dump)
    del partial[plan.blocks[0].id]
    with pytest.raises(CaseFormatError, match="missing block"):
        zone_array(partial, plan)

    warped = dict(dump)
    bid = plan.blocks[0].id
    warped[bid] = warped[bid][:, :2]
    with pytest.raises(CaseFormatError, match="does not match"):
        zone_array(warped, plan)


# ---------------------------------------------------------------------------
# Metrics

def test_mcups_definition():
    assert mcups(1_000_000, 50, 10.0) == 5.0
    with pytest.raises(ValueError, match="duration"):
        mcups(100, 1, 0.0)


def test_run_metrics_timing_source():
    m = RunMetrics(label="a", total_cells=1000, iterations=10,
                   wall_seconds=2.0)
    assert m.seconds == 2.0
    assert m.mcups == pytest.approx(0.005)
    modeled = RunMetrics(label="b", total_cells=1000, iterations=10,
                         wall_seconds=2.0, timing_source="model",
                         model_seconds=0.5)
    assert modeled.seconds == 0.5
    broken = RunMetrics(label="c", total_cells=1, iterations=1,
                        wall_seconds=1.0, timing_source="model")
    with pytest.raises(ValueError, match="no modeled time"):
        broken.seconds


def test_comp_comm_ratio_edge_cases():
    m = RunMetrics(label="a", total_cells=1, iterations=1, wall_seconds=1.0,
                   comp_seconds=3.0, comm_seconds=1.5)
    assert m.comp_comm_ratio == 2.0
    assert RunMetrics(label="b", total_cells=1, iterations=1,
                      wall_seconds=1.0, comp_seconds=3.0).comp_comm_ratio is None
    assert RunMetrics(label="c", total_cells=1, iterations=1, wall_seconds=1.0,
                      comp_seconds=3.0, comm_seconds=0.0).comp_comm_ratio is None


def test_from_timeline_pulls_phase_totals():
    tl = Timeline()
    tl.add(Interval("cpu0", "compute", 0.0, 2.0))
    tl.add(Interval("cpu0", "update", 2.0, 2.5))
    tl.add(Interval("mic0", "transfer_in", 0.0, 1.0))
    m = from_timeline("run", tl, total_cells=100, iterations=4,
                      wall_seconds=9.0, messages=3, message_bytes=480)
    assert m.timing_source == "model"
    assert m.model_seconds == tl.makespan == 2.5
    assert m.comp_seconds == 2.5
    assert m.comm_seconds == 1.0
    assert m.hidden_comm_fraction == tl.hidden_comm_fraction
    assert m.wall_seconds == 9.0 and m.messages == 3


def test_metrics_csv_roundtrip(tmp_path):
    rows = [
        RunMetrics(label="full", total_cells=4096, iterations=7,
                   wall_seconds=0.25, timing_source="model",
                   model_seconds=0.125, comp_seconds=0.1, comm_seconds=0.05,
                   hidden_comm_fraction=0.75, messages=12,
                   message_bytes=10240, converged=True, extra="note=x"),
        RunMetrics(label="bare", total_cells=64, iterations=1,
                   wall_seconds=0.5),
    ]
    path = tmp_path / "m.csv"
    metrics_to_csv(rows, str(path))
    assert metrics_from_csv(str(path)) == rows

    buf = io.StringIO()
    metrics_to_csv(rows, buf)
    assert metrics_from_csv(io.StringIO(buf.getvalue())) == rows


def test_metrics_csv_degenerate_inputs():
    header_only = io.StringIO("label,total_cells,iterations,wall_seconds\n")
    assert metrics_from_csv(header_only) == []
    with pytest.raises(ValueError, match="no header"):
        metrics_from_csv(io.StringIO("\n\n"))


def test_render_report_formats_rows():
    rows = [
        RunMetrics(label="het", total_cells=1_000_000, iterations=50,
                   wall_seconds=99.0, timing_source="model",
                   model_seconds=10.0, comp_seconds=8.0, comm_seconds=2.0,
                   hidden_comm_fraction=0.5),
        RunMetrics(label="solo", total_cells=1000, iterations=2,
                   wall_seconds=4.0),
    ]
    text = render_report(rows)
    lines = text.splitlines()
    assert lines[0].split()[:2] == ["label", "cells"]
    assert "het" in lines[2] and "5.000" in lines[2]    # MCUPS at model time
    assert "50.0" in lines[2]                           # hidden percent
    assert "comp-only" in lines[3]


# ---------------------------------------------------------------------------
# Command line

def run_cli(*argv) -> int:
    return main([str(a) for a in argv])


def test_cli_gen_partition_run_report(tmp_path, capsys):
    case_path = tmp_path / "wave.case"
    plan_path = tmp_path / "wave.plan"
    out_dir = tmp_path / "out"

    assert run_cli("gen", "--kind", "wave", "--n", 8, "--t-end", 0.002,
                   "--fixed-dt", 1e-3, "--blocks", 2, "--out", case_path) == 0
    assert case_path.exists()
    assert load_case(case_path).kind == "wave"

    assert run_cli("partition", "--case", case_path, "--out", plan_path) == 0
    assert "blocks" in plan_path.read_text()

    assert run_cli("run", "--case", case_path, "--plan", plan_path,
                   "--out-dir", out_dir) == 0
    out = capsys.readouterr().out
    assert "2 iterations" in out and "MCUPS" in out
    dump = read_dump(out_dir / "fields.bin")
    assert len(dump) == 2
    (row,) = metrics_from_csv(str(out_dir / "metrics.csv"))
    assert row.iterations == 2 and row.converged is False

    assert run_cli("report", "--metrics", out_dir / "metrics.csv",
                   "--dump", out_dir / "fields.bin") == 0
    out = capsys.readouterr().out
    assert "MCUPS" in out and "block" in out


def test_cli_gen_kinds(tmp_path):
    for kind, extra in [("uniform", ["--n", "8", "--max-iters", "3"]),
                        ("sod", ["--n", "24"]),
                        ("corner", ["--nodes", "1", "--columns", "40",
                                    "--cross", "6"])]:
        path = tmp_path / f"{kind}.case"
        assert run_cli("gen", "--kind", kind, "--out", path, *extra) == 0
        assert load_case(path).kind == kind
    case = load_case(tmp_path / "sod.case")
    assert case.zone.shape == (24, 4, 4)


def test_cli_model_only_run(tmp_path, capsys):
    case_path = tmp_path / "corner.case"
    save_case(small_corner(), case_path)
    out_dir = tmp_path / "model"
    assert run_cli("run", "--case", case_path, "--model-only",
                   "--out-dir", out_dir) == 0
    out = capsys.readouterr().out
    assert "makespan" in out
    assert (out_dir / "timeline.csv").exists()
    assert (out_dir / "metrics.csv").exists()
    (row,) = metrics_from_csv(str(out_dir / "metrics.csv"))
    assert row.timing_source == "model" and row.model_seconds > 0


def test_cli_sweep_ratio(tmp_path, capsys):
    case_path = tmp_path / "corner.case"
    save_case(small_corner(), case_path)
    out_csv = tmp_path / "sweep.csv"
    assert run_cli("sweep-ratio", "--case", case_path, "--ratios", "0.5,0.75",
                   "--steps", 1, "--out", out_csv) == 0
    out = capsys.readouterr().out
    assert "best ratio" in out
    rows = metrics_from_csv(str(out_csv))
    assert len(rows) == 2
    assert all("speedup=" in r.extra for r in rows)


def test_cli_bench_comm(tmp_path, capsys):
    case_path = tmp_path / "corner.case"
    save_case(small_corner(), case_path)
    assert run_cli("bench", "--case", case_path, "--mode", "comm",
                   "--steps", 1) == 0
    out = capsys.readouterr().out
    assert "tuned" in out and "naive" in out


def test_cli_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.case"
    bad.write_text("other-format 1\n", encoding="utf-8")
    assert run_cli("partition", "--case", bad) == 2
    assert "error:" in capsys.readouterr().err

    uni = tmp_path / "uni.case"
    save_case(uniform_case(max_iters=1), uni)
    assert run_cli("bench", "--case", uni, "--mode", "weak") == 2
    assert run_cli("run", "--case", uni, "--transport", "socket",
                   "--out-dir", tmp_path) == 2


def test_cli_run_is_deterministic(tmp_path):
    case_path = tmp_path / "wave.case"
    assert run_cli("gen", "--kind", "wave", "--n", 8, "--t-end", 0.002,
                   "--fixed-dt", 1e-3, "--seed", 7, "--out", case_path) == 0
    for d in ("a", "b"):
        assert run_cli("run", "--case", case_path,
                       "--out-dir", tmp_path / d) == 0
    first = (tmp_path / "a" / "fields.bin").read_bytes()
    second = (tmp_path / "b" / "fields.bin").read_bytes()
    assert first == second
