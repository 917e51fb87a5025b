"""Scenario configuration: validation, determinism checks, persistence."""

import pytest

from cobotplan.errors import ScenarioError
from cobotplan.scenario import ScenarioConfig, load_scenario, save_scenario


def test_defaults_are_quiet_except_per_action_noise():
    cfg = ScenarioConfig()
    assert cfg.p_change == 0.0
    assert cfg.detect_delay == 3
    assert cfg.gamma == 1.0
    assert cfg.duration_cv is None and cfg.p_fail is None
    assert cfg.is_deterministic()  # without a task model to consult


def test_validation_rejects_out_of_range_knobs():
    with pytest.raises(ScenarioError, match="p_change"):
        ScenarioConfig(p_change=1.5)
    with pytest.raises(ScenarioError, match="detect_delay"):
        ScenarioConfig(detect_delay=0)
    with pytest.raises(ScenarioError, match="change_rate"):
        ScenarioConfig(change_rate=0.0)
    with pytest.raises(ScenarioError, match="gamma"):
        ScenarioConfig(gamma=0.0)
    with pytest.raises(ScenarioError, match="duration_cv"):
        ScenarioConfig(duration_cv=-0.5)
    with pytest.raises(ScenarioError, match="p_fail"):
        ScenarioConfig(p_fail=2.0)


def test_determinism_consults_the_task_model(chair):
    cfg = ScenarioConfig()
    # chair actions default to duration_cv = 0.1, so the task is noisy
    assert not cfg.is_deterministic(chair)
    assert "per-action duration_cv > 0" in cfg.stochastic_reasons(chair)

    quiet = ScenarioConfig(duration_cv=0.0, p_fail=0.0)
    assert quiet.is_deterministic(chair)
    assert quiet.stochastic_reasons(chair) == []

    noisy = ScenarioConfig(p_change=0.2, duration_cv=0.1, p_fail=0.05)
    reasons = noisy.stochastic_reasons(chair)
    assert reasons == ["p_change=0.2", "p_fail=0.05", "duration_cv=0.1"]


def test_deterministic_variant_zeroes_every_stochastic_knob(chair):
    noisy = ScenarioConfig(p_change=0.3, duration_cv=0.2, p_fail=0.1,
                           detect_delay=5, seed=7)
    quiet = noisy.deterministic_variant()
    assert quiet.is_deterministic(chair)
    assert quiet.detect_delay == 5 and quiet.seed == 7  # the rest survives


def test_dict_round_trip_drops_unset_overrides():
    cfg = ScenarioConfig(p_change=0.1, seed=3)
    doc = cfg.to_dict()
    assert "duration_cv" not in doc and "p_fail" not in doc
    assert ScenarioConfig.from_dict(doc) == cfg
    with pytest.raises(ScenarioError, match="unknown scenario keys"):
        ScenarioConfig.from_dict({"p_chnage": 0.1})


def test_file_round_trip_and_syntax_diagnostics(tmp_path):
    cfg = ScenarioConfig(p_change=0.25, duration_cv=0.15, seed=11)
    path = tmp_path / "scenario.json"
    save_scenario(cfg, str(path))
    assert load_scenario(str(path)) == cfg

    bad = tmp_path / "broken.json"
    bad.write_text('{"p_change": 0.1,}')
    with pytest.raises(ScenarioError, match="line 1"):
        load_scenario(str(bad))
