"""Configuration, driver, CSV output and command line."""
import json
import os

import numpy as np
import pytest
from numpy.testing import assert_allclose

from spacetime_iga.geometry import map_point
from spacetime_iga.harness import (CSV_HEADER, CaseConfig, builtin_cases,
                                   cli_main, emit_csv, load_config, run_case,
                                   solution_space)
from spacetime_iga.harness import _coercivity_defect

DATA_DIR = os.path.join(os.path.dirname(__file__), 'data')

IDENTITY_GEOMETRY = {
    'knots': [[0.0, 0.0, 1.0, 1.0], [0.0, 0.0, 1.0, 1.0]],
    'degrees': [1, 1],
    'control_points': [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
}


def test_builtin_case_registry():
    cases = builtin_cases()
    assert sorted(cases) == ['fixed-1d', 'fixed-2d', 'moving-curvi-1d',
                             'moving-curvi-2d', 'moving-simple-1d']
    for name, definition in cases.items():
        assert definition.case.name == name
        assert definition.case.moving == name.startswith('moving')
        assert definition.case.d + 1 == definition.geometry.space.ndim


def test_builtin_geometries_map_key_points():
    cases = builtin_cases()
    # expanding interval: walls at -t/2 and 1 + t/2
    geom = cases['moving-simple-1d'].geometry
    assert_allclose(map_point(geom, [0.0, 1.0]), [-0.5, 1.0], atol=1e-14)
    assert_allclose(map_point(geom, [1.0, 1.0]), [1.5, 1.0], atol=1e-14)
    # curvilinear walls reach quarter depth at mid-time
    geom = cases['moving-curvi-1d'].geometry
    assert_allclose(map_point(geom, [0.0, 0.5]), [0.125, 0.5], atol=1e-14)
    assert_allclose(map_point(geom, [1.0, 0.5]), [0.875, 0.5], atol=1e-14)
    assert_allclose(map_point(geom, [0.0, 0.0]), [0.0, 0.0], atol=1e-14)
    assert_allclose(map_point(geom, [0.0, 1.0]), [0.0, 1.0], atol=1e-14)
    # 2d variant moves only the first coordinate
    geom = cases['moving-curvi-2d'].geometry
    assert_allclose(map_point(geom, [0.0, 0.7, 0.5]), [0.125, 0.7, 0.5], atol=1e-14)
    assert_allclose(map_point(geom, [1.0, 0.3, 0.5]), [0.875, 0.3, 0.5], atol=1e-14)


@pytest.mark.parametrize('degree,level', [(1, 0), (1, 3), (2, 2), (4, 1)])
def test_solution_space_dimensions(degree, level):
    geom = builtin_cases()['fixed-1d'].geometry
    space = solution_space(geom, degree, level)
    assert space.dims == (2**level + degree, 2**level + degree)
    assert all(p == degree for p in space.degrees)


def test_config_validation():
    with pytest.raises(ValueError):
        CaseConfig(case='fixed-1d', degree=0)
    with pytest.raises(ValueError):
        CaseConfig(case='fixed-1d', levels=0)
    with pytest.raises(ValueError):
        CaseConfig(case='fixed-1d', theta=0.0)
    with pytest.raises(ValueError):
        CaseConfig(case='fixed-1d', solver='cg')
    with pytest.raises(ValueError):
        CaseConfig(case='nope')
    with pytest.raises(ValueError):
        CaseConfig(case='custom')  # geometry block missing
    with pytest.raises(ValueError):
        CaseConfig(case='custom', geometry=IDENTITY_GEOMETRY)  # moving missing


def test_load_config(tmp_path):
    path = tmp_path / 'run.json'
    path.write_text(json.dumps({'case': 'fixed-1d', 'degree': 3, 'levels': 2,
                                'theta': 0.2, 'solver': 'direct'}))
    config = load_config(str(path))
    assert config == CaseConfig(case='fixed-1d', degree=3, levels=2, theta=0.2,
                                solver='direct')

    path.write_text(json.dumps({'case': 'fixed-1d', 'mesh': 4}))
    with pytest.raises(ValueError, match='unknown config keys'):
        load_config(str(path))

    path.write_text(json.dumps({'degree': 2}))
    with pytest.raises(ValueError, match="'case'"):
        load_config(str(path))

    path.write_text(json.dumps([1, 2]))
    with pytest.raises(ValueError, match='JSON object'):
        load_config(str(path))


def test_custom_geometry_reproduces_builtin():
    builtin = run_case(CaseConfig(case='fixed-1d', degree=1, levels=2))
    custom = run_case(CaseConfig(case='custom', degree=1, levels=2,
                                 geometry=IDENTITY_GEOMETRY, moving=False))
    for rb, rc in zip(builtin.records, custom.records):
        assert rb.dofs == rc.dofs
        assert_allclose(rc.error_l2, rb.error_l2, rtol=1e-13)
        assert_allclose(rc.error_energy, rb.error_energy, rtol=1e-13)


def test_run_case_fixed_sweep():
    report = run_case(CaseConfig(case='fixed-1d', degree=1, levels=3))
    assert report.case == 'fixed-1d' and not report.moving
    assert len(report.records) == 3
    for k, record in enumerate(report.records):
        assert record.level == k
        assert record.dofs == (2**k + 1) ** 2
        assert_allclose(record.h, np.sqrt(2.0) * 0.5**k, rtol=1e-14)
        assert record.solve.method == 'direct'
    assert report.records[0].rate_l2 == 0.0
    assert 1.5 < report.records[2].rate_l2 < 2.5
    assert 0.5 < report.records[2].rate_energy < 1.5
    errors = report.errors_l2
    assert np.all(errors[1:] < errors[:-1])


def test_solver_override_agrees_with_direct():
    direct = run_case(CaseConfig(case='fixed-1d', degree=2, levels=3))
    gmres = run_case(CaseConfig(case='fixed-1d', degree=2, levels=3,
                                solver='gmres'))
    assert gmres.records[-1].solve.method == 'gmres'
    assert gmres.records[-1].solve.iterations > 0
    assert_allclose(gmres.errors_l2, direct.errors_l2, rtol=1e-8)


def test_emit_csv_deterministic(tmp_path):
    report = run_case(CaseConfig(case='fixed-1d', degree=1, levels=2))
    p1, p2 = tmp_path / 'a.csv', tmp_path / 'b.csv'
    emit_csv(report, str(p1), deterministic=True)
    emit_csv(report, str(p2), deterministic=True)
    text = p1.read_text()
    assert text == p2.read_text()
    lines = text.strip().split('\n')
    assert lines[0] == CSV_HEADER
    assert len(lines) == 3
    for line in lines[1:]:
        assert line.split(',')[-1] == '0.00000e+00'


def test_csv_matches_golden_file(tmp_path):
    report = run_case(CaseConfig(case='fixed-1d', degree=1, levels=4))
    path = tmp_path / 'sweep.csv'
    emit_csv(report, str(path), deterministic=True)
    golden = os.path.join(DATA_DIR, 'fixed-1d-p1-l4.csv')
    with open(golden) as fh:
        assert path.read_text() == fh.read()


def test_cli_list_cases(capsys):
    assert cli_main(['list-cases']) == 0
    out = capsys.readouterr().out
    for name in builtin_cases():
        assert name in out


def test_cli_run_with_overrides(tmp_path, capsys):
    config = tmp_path / 'run.json'
    config.write_text(json.dumps({'case': 'fixed-1d', 'degree': 1, 'levels': 4}))
    out_csv = tmp_path / 'out.csv'
    code = cli_main(['run', '--config', str(config), '--levels', '2',
                     '--out', str(out_csv), '--deterministic'])
    assert code == 0
    captured = capsys.readouterr().out
    assert 'case fixed-1d, degree 1' in captured
    lines = out_csv.read_text().strip().split('\n')
    assert lines[0] == CSV_HEADER
    assert len(lines) == 3  # override trimmed the sweep to two levels


def test_cli_config_errors(tmp_path, capsys):
    assert cli_main(['run', '--config', str(tmp_path / 'missing.json')]) == 2
    bad = tmp_path / 'bad.json'
    bad.write_text(json.dumps({'case': 'fixed-1d', 'bogus': 1}))
    assert cli_main(['run', '--config', str(bad)]) == 2
    capsys.readouterr()


def test_cli_requires_subcommand():
    with pytest.raises(SystemExit):
        cli_main([])


def test_coercivity_check_rejects_skewed_theta():
    # fault injection: scaling theta on the norm side must be detected
    honest = _coercivity_defect('fixed-1d', 1, 1, 1.0)
    skewed = _coercivity_defect('fixed-1d', 1, 1, 1.5)
    assert honest < 1e-10
    assert skewed > 1e-3


def test_cli_verify_detects_fault_injection(capsys):
    # even a 1% theta perturbation on one side must fail the suite
    assert cli_main(['verify', '--theta-skew', '1.01']) == 1
    out = capsys.readouterr().out
    assert 'FAIL coercivity-identity' in out
