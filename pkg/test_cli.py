"""
CLI Tests
Drives cli.main() end to end on small instances and checks exit codes and CSV output
"""

import csv
import io

import pytest

from cli import (
    CSV_HEADER,
    EXIT_INTERNAL,
    EXIT_OK,
    EXIT_USAGE,
    EXIT_VALIDATION,
    RPD_ENVELOPE,
    SWEEP_HEADER,
    BenchmarkRow,
    check_rpd_envelope,
    main,
    solve_instance,
    summarize_runs,
)
from config import load_settings
from evaluator import enumerate_optimum, evaluate_exact, lp_lower_bound, rpd
from instance import Individual, load_instance, save_instance

QUICK = ['--population', '6', '--t-max', '3', '--t-nip', '3']


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch, tmp_path):
    for key in ('POPULATION', 'T_MAX', 'T_NIP_MAX', 'WORKERS', 'LOG_LEVEL', 'LOCAL_SEARCH'):
        monkeypatch.delenv(f'HEAFA_{key}', raising=False)
    monkeypatch.chdir(tmp_path)


@pytest.fixture
def instance_file(tmp_path):
    path = tmp_path / 'inst.json'
    assert main(['gen', '--class', '2', '--plants', '3', '--seed', '4', '--out', str(path)]) == EXIT_OK
    return path


@pytest.fixture
def single_path_file(tmp_path, single_path):
    path = tmp_path / 'single.json'
    save_instance(single_path, path)
    return path


def read_rows(text):
    return list(csv.reader(io.StringIO(text)))


# ================================
# gen
# ================================

def test_gen_is_deterministic(tmp_path):
    first, second = tmp_path / 'a.json', tmp_path / 'b.json'
    for path in (first, second):
        assert main(['gen', '--class', '3', '--plants', '4', '--seed', '12', '--out', str(path)]) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()
    inst = load_instance(first)
    assert (inst.n_plants, inst.n_depots, inst.n_customers) == (4, 8, 16)


def test_gen_rejects_unknown_class(tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        main(['gen', '--class', '9', '--plants', '4', '--out', str(tmp_path / 'x.json')])
    assert excinfo.value.code == EXIT_USAGE


def test_gen_rejects_non_positive_plants(tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        main(['gen', '--class', '1', '--plants', '0', '--out', str(tmp_path / 'x.json')])
    assert excinfo.value.code == EXIT_USAGE


# ================================
# lb and eval
# ================================

def test_lb_prints_one_decimal(single_path_file, capsys):
    assert main(['lb', '--instance', str(single_path_file)]) == EXIT_OK
    assert capsys.readouterr().out.strip() == '103.0'


def test_eval_mask(single_path_file, capsys):
    assert main(['eval', '--instance', str(single_path_file), '--mask', '1|1']) == EXIT_OK
    assert capsys.readouterr().out.strip() == '1|1 115.0'


def test_eval_repairs_on_request(single_path_file, capsys):
    assert main(['eval', '--instance', str(single_path_file), '--mask', '00', '--repair']) == EXIT_OK
    assert capsys.readouterr().out.strip() == '1|1 115.0'


def test_eval_infeasible_mask_is_a_validation_error(single_path_file):
    assert main(['eval', '--instance', str(single_path_file), '--mask', '0|1']) == EXIT_VALIDATION


@pytest.mark.parametrize('mask', ['1', '1|1|1', '1|x'])
def test_eval_bad_mask(single_path_file, mask):
    assert main(['eval', '--instance', str(single_path_file), '--mask', mask]) == EXIT_USAGE


def test_eval_enumerate(instance_file, capsys):
    assert main(['eval', '--instance', str(instance_file), '--enumerate']) == EXIT_OK
    bits, value = capsys.readouterr().out.split()
    inst = load_instance(instance_file)
    best = Individual.from_bitstring(bits, inst.n_plants)
    assert float(value) == pytest.approx(evaluate_exact(inst, best).objective, abs=0.05)


def test_missing_instance_file(tmp_path):
    assert main(['lb', '--instance', str(tmp_path / 'missing.json')]) == EXIT_VALIDATION


def test_malformed_instance_file(tmp_path):
    path = tmp_path / 'broken.json'
    path.write_text('{"class": 1, "f": [1, 2]')
    assert main(['lb', '--instance', str(path)]) == EXIT_VALIDATION


def test_unknown_config_key(single_path_file, tmp_path):
    config = tmp_path / 'solver.conf'
    config.write_text('population=10\nmutation_style=wild\n')
    assert main(['lb', '--instance', str(single_path_file), '--config', str(config)]) == EXIT_VALIDATION


def test_invalid_config_value_in_engine(instance_file, tmp_path):
    config = tmp_path / 'solver.conf'
    config.write_text('ls_compare=exact\n')
    assert main(['solve', '--instance', str(instance_file), '--runs', '1', '--config', str(config)]
                + QUICK) == EXIT_VALIDATION


# ================================
# solve
# ================================

def test_solve_single_run(instance_file, capsys):
    assert main(['solve', '--instance', str(instance_file), '--runs', '1'] + QUICK) == EXIT_OK
    rows = read_rows(capsys.readouterr().out)
    assert rows[0] == CSV_HEADER
    assert len(rows) == 2
    row = dict(zip(CSV_HEADER, rows[1]))
    assert row['class'] == '2'
    assert row['z_min'] == row['z_avg']
    assert row['rpd_min'] == row['rpd_avg']
    assert float(row['z_min']) >= float(row['lb'])


def test_solve_writes_file(instance_file, tmp_path):
    out = tmp_path / 'solve.csv'
    assert main(['solve', '--instance', str(instance_file), '--runs', '2', '--algo', 'baseline_ga',
                 '--out', str(out)] + QUICK) == EXIT_OK
    rows = read_rows(out.read_text())
    row = dict(zip(CSV_HEADER, rows[1]))
    assert float(row['z_min']) <= float(row['z_avg'])
    assert float(row['rpd_min']) <= float(row['rpd_avg'])


def test_solve_rpd_is_consistent_with_enumerated_optimum(instance_file, capsys):
    inst = load_instance(instance_file)
    _, optimum = enumerate_optimum(inst)
    lb = lp_lower_bound(inst)
    assert main(['solve', '--instance', str(instance_file), '--runs', '2'] + QUICK) == EXIT_OK
    row = dict(zip(CSV_HEADER, read_rows(capsys.readouterr().out)[1]))
    assert float(row['rpd_min']) >= 0.0
    assert float(row['rpd_min']) >= rpd(optimum, lb) - 0.01


@pytest.mark.slow
def test_solve_reaches_enumerated_optimum_rpd(instance_file, capsys):
    inst = load_instance(instance_file)
    _, optimum = enumerate_optimum(inst)
    expected = rpd(optimum, lp_lower_bound(inst))
    assert main(['solve', '--instance', str(instance_file), '--runs', '5']) == EXIT_OK
    row = dict(zip(CSV_HEADER, read_rows(capsys.readouterr().out)[1]))
    assert float(row['rpd_min']) == pytest.approx(expected, abs=0.01)


def test_summary_row_fields_are_recomputable(instance_file):
    inst = load_instance(instance_file)
    settings = load_settings(overrides={'population': 6, 't_max': 3, 't_nip_max': 3}, environ={})
    lb, reports = solve_instance(inst, settings, 'hea_fa', 3, 0)
    row = summarize_runs(inst.class_id, 1, lb, reports, 0)
    fields = dict(zip(CSV_HEADER, row.to_csv()))
    assert row.z_min <= row.z_avg
    assert fields['rpd_min'] == f"{rpd(row.z_min, row.lb):.2f}"
    assert fields['rpd_avg'] == f"{rpd(row.z_avg, row.lb):.2f}"
    assert row.runs == 3


# ================================
# bench and sweep
# ================================

def bench(capsys, *extra):
    argv = ['bench', '--classes', '1,2', '--plants', '2', '--instances', '1', '--runs', '1'] + QUICK
    assert main(argv + list(extra)) == EXIT_OK
    return read_rows(capsys.readouterr().out)


def test_bench_rows_and_average(capsys):
    rows = bench(capsys)
    assert rows[0] == CSV_HEADER
    assert [row[:2] for row in rows[1:]] == [['1', '1'], ['2', '1'], ['Average', '']]
    lbs = [float(row[2]) for row in rows[1:3]]
    assert float(rows[3][2]) == pytest.approx(sum(lbs) / 2, abs=0.11)


def test_bench_is_deterministic_apart_from_time(capsys):
    first = bench(capsys)
    second = bench(capsys)
    assert [row[:7] for row in first] == [row[:7] for row in second]


def test_bench_per_class_average(capsys):
    rows = bench(capsys, '--per-class-average')
    assert [row[:2] for row in rows[1:]] == [
        ['1', '1'], ['1', 'Average'], ['2', '1'], ['2', 'Average'], ['Average', ''],
    ]


def test_bench_rejects_unknown_class():
    with pytest.raises(SystemExit) as excinfo:
        main(['bench', '--classes', '1,7'])
    assert excinfo.value.code == EXIT_USAGE


def test_bench_ignores_repeated_classes(capsys):
    argv = ['bench', '--classes', '1,1', '--plants', '2', '--instances', '1', '--runs', '1'] + QUICK
    assert main(argv) == EXIT_OK
    rows = read_rows(capsys.readouterr().out)
    assert [row[:2] for row in rows[1:]] == [['1', '1'], ['Average', '']]


def envelope_row(class_id, rpd_min):
    return BenchmarkRow(class_id, 1, 100.0, 100.0 + rpd_min, 100.0 + rpd_min, rpd_min, rpd_min, 0.1, 5, 0)


def test_rpd_envelope_accepts_rows_inside(caplog):
    rows = [envelope_row(1, 2.0), envelope_row(3, 11.99), envelope_row(5, 0.0)]
    with caplog.at_level('WARNING', logger='cli'):
        assert check_rpd_envelope(rows) == []
    assert caplog.records == []


def test_rpd_envelope_reports_rows_outside(caplog):
    inside, outside = envelope_row(1, 2.0), envelope_row(3, 15.0)
    with caplog.at_level('WARNING', logger='cli'):
        assert check_rpd_envelope([inside, outside]) == [outside]
    assert len(caplog.records) == 1
    assert f"{RPD_ENVELOPE[3]:.0f}%" in caplog.records[0].getMessage()


def test_rpd_envelope_boundary_is_a_miss():
    row = envelope_row(2, RPD_ENVELOPE[2])
    assert check_rpd_envelope([row]) == [row]


def test_sweep_means(instance_file, capsys):
    argv = ['sweep', '--populations', '4,6', '--instance', str(instance_file), '--runs', '1',
            '--t-max', '2', '--t-nip', '2']
    assert main(argv) == EXIT_OK
    rows = read_rows(capsys.readouterr().out)
    assert rows[0] == SWEEP_HEADER
    assert [row[0] for row in rows[1:]] == ['4', '6']


def test_exit_codes_are_distinct():
    assert len({EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_INTERNAL}) == 4
