import json
import os

import numpy as np
import pandas as pd
import pytest

from src.cli.bench import fit_exponents, run_suite
from src.cli.commands import EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_OK, main, parse_chunk_spec
from src.models.errors import BreakdownError, DirectionSearchError, SingularInteriorError
from src.utils.config import BENCH_COLUMNS
from src.utils.io import load_mesh, read_ordering, read_solution, save_mesh

GOLDEN = os.path.join(os.path.dirname(__file__), 'golden')


@pytest.fixture
def grid_file(tmp_path):
    path = tmp_path / 'grid.json'
    assert main(['gen', 'grid', '4', '4', '4', '--out', str(path)]) == EXIT_OK
    return path


def test_gen_grid(grid_file, tmp_path):
    mesh = load_mesh(grid_file)
    assert mesh.n_vertices == 125
    assert mesh.n_tets == 5 * 64

    again = tmp_path / 'again.json'
    main(['gen', 'grid', '4', '4', '4', '--out', str(again)])
    assert grid_file.read_bytes() == again.read_bytes()


def test_gen_union(tmp_path):
    path = tmp_path / 'union.json'
    assert main(['gen', 'union', 'grid:3,3,3', 'grid:3,3,3', '--glue', 'y', '--out', str(path)]) == EXIT_OK
    mesh = load_mesh(path)
    assert mesh.k == 2
    assert mesh.n_vertices == 2 * 64 - 16


def test_gen_rejects_bad_dims(tmp_path, capsys):
    assert main(['gen', 'grid', '4', '4', '--out', str(tmp_path / 'm.json')]) == EXIT_INPUT
    assert 'Error' in capsys.readouterr().err


def test_solve_writes_outputs(grid_file, tmp_path, capsys):
    out = tmp_path / 'x.bin'
    report_path = tmp_path / 'report.json'
    ordering_path = tmp_path / 'order.txt'
    matrix_path = tmp_path / 'A.mtx'
    capsys.readouterr()
    code = main(['solve', str(grid_file), '--eps', '1e-8', '--out', str(out), '--report', str(report_path),
                 '--ordering-out', str(ordering_path), '--matrix-out', str(matrix_path)])
    assert code == EXIT_OK

    summary = json.loads(capsys.readouterr().out)
    assert summary['converged']
    report = json.loads(report_path.read_text())
    assert report['residual'] <= 1.01e-8
    assert report['n'] == 125

    x = read_solution(out)
    assert len(x) == 3 * 125
    assert np.all(np.isfinite(x))
    order = read_ordering(ordering_path)
    assert len(order) == report['preconditioner_vertices']
    assert matrix_path.exists()


def test_solve_reads_rhs(grid_file, tmp_path):
    rhs = tmp_path / 'f.txt'
    np.savetxt(rhs, np.random.default_rng(2).standard_normal(3 * 125))
    out = tmp_path / 'x.txt'
    assert main(['solve', str(grid_file), '--rhs', str(rhs), '--format', 'txt', '--out', str(out)]) == EXIT_OK
    assert len(read_solution(out, 'txt')) == 3 * 125


def test_solve_rejects_short_rhs(grid_file, tmp_path, capsys):
    rhs = tmp_path / 'f.txt'
    np.savetxt(rhs, np.ones(10))
    assert main(['solve', str(grid_file), '--rhs', str(rhs)]) == EXIT_INPUT
    assert 'rhs' in capsys.readouterr().err


def test_solve_not_converged_exit_code(tmp_path, capsys):
    path = tmp_path / 'grid6.json'
    main(['gen', 'grid', '6', '6', '6', '--out', str(path)])
    capsys.readouterr()
    report_path = tmp_path / 'report.json'
    code = main(['solve', str(path), '--eps', '1e-12', '--cr', '0.9', '--max-iters', '1',
                 '--report', str(report_path)])
    assert code == EXIT_NOT_CONVERGED
    assert not json.loads(report_path.read_text())['converged']
    assert not json.loads(capsys.readouterr().out)['converged']


def test_malformed_mesh_exit_code(tmp_path, capsys):
    path = tmp_path / 'bad.json'
    path.write_text(json.dumps({'vertices': [[0, 0, 0]], 'tets': 'x'}))
    assert main(['solve', str(path)]) == EXIT_INPUT
    assert 'tets' in capsys.readouterr().err


def test_missing_mesh_file(tmp_path):
    assert main(['check', str(tmp_path / 'nope.json')]) == EXIT_INPUT


def test_check_reports_rank(tmp_path, capsys):
    path = tmp_path / 'grid3.json'
    main(['gen', 'grid', '3', '3', '3', '--out', str(path)])
    capsys.readouterr()
    assert main(['check', str(path)]) == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert result['spectral']['rank'] == 186
    assert result['spectral']['expected_rank'] == 186
    assert result['spectral']['lambda_min'] > 0
    assert result['stiffly_connected']
    assert result['diameter'] == pytest.approx(3 * np.sqrt(3))


def test_check_flags_hinged_tets(two_tets_on_edge, tmp_path, capsys):
    path = tmp_path / 'hinge.json'
    save_mesh(two_tets_on_edge, path)
    assert main(['check', str(path)]) == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert not result['stiffly_connected']
    assert result['spectral']['rank'] < result['spectral']['expected_rank']


def test_bench_header_matches_golden():
    with open(os.path.join(GOLDEN, 'bench_header.csv')) as f:
        assert f.readline().strip().split(',') == BENCH_COLUMNS


def test_fit_exponents_recovers_power_law():
    n = np.array([100.0, 1000.0, 10000.0])
    frame = pd.DataFrame({column: np.nan for column in BENCH_COLUMNS}, index=range(3))
    frame['n'] = n
    frame['flops'] = 3.0 * n ** 1.5
    frame['fill_in'] = n
    row = fit_exponents(frame, 'scaling-n')
    assert row['suite'] == 'scaling-n:fit'
    assert row['flops'] == pytest.approx(1.5)
    assert row['fill_in'] == pytest.approx(1.0)
    assert np.isnan(row['iterations'])


def test_parse_chunk_spec():
    assert parse_chunk_spec('grid:2,3,4') == (2, 3, 4)
    assert parse_chunk_spec('grid:2,2,2@4,0,0') == ((2, 2, 2), (4.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        parse_chunk_spec('box:2,2,2')
    with pytest.raises(ValueError):
        parse_chunk_spec('grid:2,2')


def test_unknown_suite():
    with pytest.raises(ValueError, match="Unknown suite"):
        run_suite('scaling-q')


@pytest.mark.slow
def test_scaling_suite_beats_full_dissection(tmp_path):
    frame = run_suite('scaling-n', out=str(tmp_path / 'bench.csv'))
    assert list(frame.columns) == BENCH_COLUMNS
    assert frame['suite'].iloc[-1] == 'scaling-n:fit'
    fit, largest = frame.iloc[-1], frame.iloc[-2]
    assert fit['flops'] <= 1.9
    assert fit['flops'] < fit['baseline_flops']
    assert largest['flops'] < largest['baseline_flops']
    assert largest['fill_in'] < largest['baseline_fill_in']


@pytest.mark.parametrize('error, code', [
    (BreakdownError("PCG breakdown at iteration 3"), EXIT_NOT_CONVERGED),
    (SingularInteriorError("Eliminated component of 4 vertices is a mechanism"), EXIT_INPUT),
    (DirectionSearchError("no direction found"), EXIT_INPUT),
])
def test_solver_errors_map_to_exit_codes(grid_file, monkeypatch, capsys, error, code):
    def failing_solver(mesh, f, config):
        raise error

    monkeypatch.setattr('src.cli.commands.truss_solver', failing_solver)
    capsys.readouterr()
    assert main(['solve', str(grid_file)]) == code
    assert str(error) in capsys.readouterr().err
