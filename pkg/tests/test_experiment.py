"""Tests for the two-interval speed-discrimination protocol: schedule
construction over the 25-cell offset grid, session bookkeeping with
single-shot response recording, aggregation into per-cell choice
fractions, and the line-oriented JSON persistence round trip.

Schedules are driven entirely by one seeded generator, so determinism
tests compare full record equality.  Aggregation is checked three ways:
a near-noiseless observer must produce a step matrix, single-repetition
cells must be 0 or 1, and a stochastic observer must land within a
binomial envelope of the closed-form psychometric prediction.
"""

import json
import math
import random

import numpy as np
import pytest

from mclab.errors import ConfigurationError, ConflictError, SessionFormatError
from mclab.experiment import (
    ExperimentConfig,
    SessionStore,
    TrialRecord,
    aggregate,
    build_schedule,
    load_session,
    persist_session,
    write_aggregate_csv,
)
from mclab.observer import ObserverModel, psychometric_theoretical, simulate_observer
from mclab.params import convert_mode_std
from mclab.psychfit import fit_psychometric

SEED_EXP = 43400

Z_CELL_VALUES = (0.80, 1.07, 1.28, 1.60, 2.13)


def _session(config=None, seed=SEED_EXP, session_id="s-test"):
    config = config or ExperimentConfig()
    return SessionStore(session_id=session_id, config=config,
                        trials=build_schedule(config, seed))


def _noiseless_observer():
    """Observer whose measurement noise is negligible and whose prior is
    flat, so every choice tracks the larger true speed."""
    return ObserverModel(sigma_by_z={z: 1e-9 for z in Z_CELL_VALUES},
                         a_by_z={z: 0.0 for z in Z_CELL_VALUES})


def _stochastic_observer():
    """Moderate-noise observer whose predicted choice fractions stay
    away from 0 and 1 over the default offset grid, so the Monte-Carlo
    comparison against the closed form is informative in every cell."""
    sigmas = dict(zip(Z_CELL_VALUES, (0.30, 0.28, 0.25, 0.27, 0.26)))
    slopes = dict(zip(Z_CELL_VALUES, (-1.1, -0.9, -0.8, -0.95, -0.85)))
    return ObserverModel(sigma_by_z=sigmas, a_by_z=slopes)


def _respond_all(store, model, seed):
    responses = simulate_observer(store.trials, model, seed)
    for trial, response in zip(store.trials, responses):
        store.record_response(trial.trial_id, response)
    return store


# ---------------------------------------------------------------------------
# Configuration defaults and validation


def test_default_config_matches_protocol():
    """The default protocol: reference frequency 1.28 c/deg with unit
    frequency-width scale, five speed offsets crossed with five
    frequency offsets, ten repetitions per cell, vertical-wavevector
    textures, and two 250 ms intervals separated by 250 ms."""
    config = ExperimentConfig()
    assert config.z_star == 1.28
    assert config.u_star == 10.0
    assert config.t_star == 0.2
    assert config.delta_u == (-2.0, -1.0, 0.0, 1.0, 2.0)
    assert config.delta_z == (-0.48, -0.21, 0.0, 0.32, 0.85)
    assert config.reps_per_cell == 10
    assert config.theta0 == math.pi / 2
    assert config.sigma_theta == math.pi / 12
    assert config.d_z == 1.0
    assert config.stimulus_ms == 250.0
    assert config.isi_ms == 250.0


def test_offsets_must_leave_speed_and_frequency_positive():
    with pytest.raises(ConfigurationError):
        ExperimentConfig(u_star=2.0)  # 2 - 2 = 0 deg/s
    with pytest.raises(ConfigurationError):
        ExperimentConfig(z_star=0.40)  # 0.40 - 0.48 < 0 c/deg
    with pytest.raises(ConfigurationError):
        ExperimentConfig(delta_u=(-10.0, 0.0, 10.0))
    with pytest.raises(ConfigurationError):
        ExperimentConfig(reps_per_cell=0)


# ---------------------------------------------------------------------------
# Schedule construction


def test_default_schedule_counts():
    """Ten repetitions of each of the 25 offset combinations, with
    unique trial identifiers."""
    trials = build_schedule(ExperimentConfig(), SEED_EXP)
    assert len(trials) == 250
    counts = {}
    for trial in trials:
        counts[(trial.du, trial.dz)] = counts.get((trial.du, trial.dz), 0) + 1
    assert len(counts) == 25
    assert all(n == 10 for n in counts.values())
    assert len({trial.trial_id for trial in trials}) == 250


def test_single_rep_schedule_has_all_distinct_cells():
    config = ExperimentConfig(reps_per_cell=1)
    trials = build_schedule(config, SEED_EXP)
    assert len(trials) == 25
    assert len({(trial.du, trial.dz) for trial in trials}) == 25


def test_schedule_deterministic_under_seed():
    config = ExperimentConfig()
    first = build_schedule(config, SEED_EXP + 2)
    second = build_schedule(config, SEED_EXP + 2)
    assert first == second
    other = build_schedule(config, SEED_EXP + 3)
    assert any(a.stim_seeds != b.stim_seeds for a, b in zip(first, other))


def test_interval_assignment_balanced():
    """Which interval carries the speed offset is a fair per-trial coin:
    over 10^4 trials the empirical rate stays within three binomial
    standard errors of one half."""
    config = ExperimentConfig(reps_per_cell=400)
    trials = build_schedule(config, SEED_EXP + 1)
    assert len(trials) == 10000
    rate = np.mean([trial.u_offset_interval for trial in trials])
    assert abs(rate - 0.5) < 3.0 * 0.5 / math.sqrt(10000)


def test_stimulus_parameters_fully_resolved():
    """Each trial pairs a speed-offset stimulus at the reference
    frequency with a frequency-offset stimulus at the reference speed,
    and resolves both into full texture parameter sets whose speed
    width, frequency mode, and temporal scale multiply to one."""
    config = ExperimentConfig()
    trials = build_schedule(config, SEED_EXP + 4)
    for trial in trials:
        j = trial.u_offset_interval
        assert j in (0, 1)
        assert trial.t_star == config.t_star
        assert trial.pair[j] == (config.u_star + trial.du, config.z_star)
        assert trial.pair[1 - j] == (config.u_star, config.z_star + trial.dz)
        for (u, z), params in zip(trial.pair, trial.stim_params):
            z0, sigma_z = convert_mode_std(z, config.d_z)
            assert params.v0 == (u, 0.0)
            assert params.theta0 == config.theta0
            assert params.sigma_theta == config.sigma_theta
            assert params.z0 == z0
            assert params.sigma_z == sigma_z
            assert abs(params.sigma_r * params.z0 * config.t_star - 1.0) < 1e-14


# ---------------------------------------------------------------------------
# Session bookkeeping


def test_record_response_sets_fields_once():
    store = _session()
    trial = store.trials[0]
    store.record_response(trial.trial_id, "first", response_time_ms=712.5)
    assert trial.response == "first"
    assert trial.response_time_ms == 712.5
    assert not trial.flagged
    with pytest.raises(ConflictError):
        store.record_response(trial.trial_id, "second")
    assert trial.response == "first"


def test_record_response_validates_inputs():
    store = _session()
    with pytest.raises(ConfigurationError):
        store.record_response(store.trials[0].trial_id, "faster")
    with pytest.raises(KeyError):
        store.record_response("no-such-trial", "first")


def test_session_status_lifecycle():
    """A session is active until every trial has a response, then
    completed; completed sessions reject further writes."""
    store = _session(ExperimentConfig(reps_per_cell=1), SEED_EXP + 5)
    assert store.status == "active"
    _respond_all(store, _noiseless_observer(), SEED_EXP + 5)
    assert store.status == "completed"
    with pytest.raises(ConflictError):
        store.record_response(store.trials[0].trial_id, "first")
    empty = SessionStore(session_id="empty", config=ExperimentConfig(),
                         trials=[])
    assert empty.status == "active"


def test_next_unanswered_walks_schedule_in_order():
    store = _session(ExperimentConfig(reps_per_cell=1), SEED_EXP + 6)
    assert store.next_unanswered() is store.trials[0]
    store.record_response(store.trials[0].trial_id, "second")
    assert store.next_unanswered() is store.trials[1]
    for trial in store.trials[1:]:
        store.record_response(trial.trial_id, "first")
    assert store.next_unanswered() is None


def test_flagged_responses_recorded_and_kept_out_of_fits():
    """A response can be recorded with a quality flag; the psychometric
    fitter skips flagged trials by default."""
    store = _session(ExperimentConfig(reps_per_cell=2), SEED_EXP + 7)
    responses = simulate_observer(store.trials, _stochastic_observer(),
                                  SEED_EXP + 7)
    for trial, response in zip(store.trials, responses):
        store.record_response(trial.trial_id, response,
                              flagged=trial.trial_id.endswith("3"))
    n_flagged = sum(trial.flagged for trial in store.trials)
    assert n_flagged > 0
    fits = fit_psychometric(store.trials)
    fitted = sum(fit.n_trials for fit in fits.values())
    assert fitted == len(store.trials) - n_flagged


# ---------------------------------------------------------------------------
# Aggregation


def test_aggregate_step_matrix_for_noiseless_observer():
    """With negligible noise and a flat prior the speed-offset interval
    wins exactly when its speed is larger, so away from the zero-offset
    row the choice-fraction matrix is a step."""
    store = _respond_all(_session(seed=SEED_EXP + 8), _noiseless_observer(),
                         SEED_EXP + 8)
    table = aggregate(store)
    assert len(table) == 25
    for (du, dz), (n, phat) in table.items():
        assert n == 10
        if du > 0:
            assert phat == 1.0
        elif du < 0:
            assert phat == 0.0


def test_aggregate_counts_only_responded_trials():
    store = _session(seed=SEED_EXP + 9)
    responses = simulate_observer(store.trials, _noiseless_observer(),
                                  SEED_EXP + 9)
    for trial, response in zip(store.trials[:100], responses):
        store.record_response(trial.trial_id, response)
    table = aggregate(store)
    assert sum(n for n, _ in table.values()) == 100
    for (du, dz), (n, _) in table.items():
        answered = [t for t in store.trials
                    if (t.du, t.dz) == (du, dz) and t.response is not None]
        assert n == len(answered)


def test_aggregate_is_permutation_invariant():
    store = _respond_all(_session(seed=SEED_EXP + 10), _noiseless_observer(),
                         SEED_EXP + 10)
    shuffled = list(store.trials)
    random.Random(7).shuffle(shuffled)
    reordered = SessionStore(session_id=store.session_id,
                             config=store.config, trials=shuffled)
    assert aggregate(reordered) == aggregate(store)


def test_aggregate_single_rep_entries_are_binary():
    store = _respond_all(_session(ExperimentConfig(reps_per_cell=1),
                                  SEED_EXP + 11),
                         _stochastic_observer(), SEED_EXP + 11)
    table = aggregate(store)
    assert len(table) == 25
    assert all(n == 1 and phat in (0.0, 1.0) for n, phat in table.values())


def test_aggregate_matches_closed_form_psychometric():
    """At 10^3 repetitions per cell the empirical choice fractions from
    the sampling observer agree with the closed-form probit prediction
    to within a three-standard-error binomial envelope."""
    config = ExperimentConfig(reps_per_cell=1000)
    store = _respond_all(_session(config, SEED_EXP + 12),
                         _stochastic_observer(), SEED_EXP + 12)
    model = _stochastic_observer()
    table = aggregate(store)
    assert len(table) == 25
    for (du, dz), (n, phat) in table.items():
        assert n == 1000
        p = psychometric_theoretical(config.u_star + du, config.z_star + dz,
                                     config.u_star, config.z_star, model)
        envelope = 3.0 * math.sqrt(p * (1.0 - p) / n) + 0.005
        assert abs(phat - p) < envelope, (du, dz, phat, p)


def test_fit_psychometric_groups_session_by_frequency():
    """A responded session fits into one psychometric curve per probed
    frequency, each pooling the trials of its frequency column."""
    config = ExperimentConfig(reps_per_cell=20)
    store = _respond_all(_session(config, SEED_EXP + 13),
                         _stochastic_observer(), SEED_EXP + 13)
    fits = fit_psychometric(store.trials)
    assert set(fits) == {(round(config.z_star + dz, 9), config.z_star,
                          config.u_star, config.t_star)
                         for dz in config.delta_z}
    assert all(fit.n_trials == 100 for fit in fits.values())


# ---------------------------------------------------------------------------
# Persistence


def test_persist_load_round_trip(tmp_path):
    """A partially answered session survives the line-oriented JSON
    round trip exactly, including response times and quality flags."""
    store = _session(seed=SEED_EXP + 14, session_id="s-roundtrip")
    responses = simulate_observer(store.trials, _stochastic_observer(),
                                  SEED_EXP + 14)
    for i, (trial, response) in enumerate(zip(store.trials[:137], responses)):
        store.record_response(
            trial.trial_id, response,
            response_time_ms=None if i % 5 == 0 else 400.0 + 3.0 * i,
            flagged=(i % 17 == 0))
    path = tmp_path / "session.jsonl"
    persist_session(store, path)
    loaded = load_session(path)
    assert loaded == store
    assert loaded.status == store.status == "active"
    assert aggregate(loaded) == aggregate(store)


def test_persist_completed_session_round_trip(tmp_path):
    store = _respond_all(_session(ExperimentConfig(reps_per_cell=1),
                                  SEED_EXP + 15),
                         _stochastic_observer(), SEED_EXP + 15)
    path = tmp_path / "done.jsonl"
    persist_session(store, path)
    loaded = load_session(path)
    assert loaded == store
    assert loaded.status == "completed"


def test_persist_empty_session(tmp_path):
    store = SessionStore(session_id="s-empty", config=ExperimentConfig(),
                         trials=[])
    path = tmp_path / "empty.jsonl"
    persist_session(store, path)
    loaded = load_session(path)
    assert loaded == store
    assert loaded.trials == []
    assert loaded.status == "active"


def test_load_reports_malformed_line_number(tmp_path):
    store = _session(ExperimentConfig(reps_per_cell=1), SEED_EXP + 16)
    path = tmp_path / "session.jsonl"
    persist_session(store, path)
    lines = path.read_text().splitlines()

    bad = tmp_path / "bad-json.jsonl"
    bad.write_text("\n".join(lines[:4] + ["{broken"] + lines[5:]) + "\n")
    with pytest.raises(SessionFormatError, match="line 5"):
        load_session(bad)

    missing = tmp_path / "missing-key.jsonl"
    missing.write_text("\n".join(lines[:6] + ["{}"] + lines[7:]) + "\n")
    with pytest.raises(SessionFormatError, match="line 7"):
        load_session(missing)

    header = tmp_path / "bad-header.jsonl"
    header.write_text("not json\n" + "\n".join(lines[1:]) + "\n")
    with pytest.raises(SessionFormatError, match="line 1"):
        load_session(header)

    empty = tmp_path / "zero-bytes.jsonl"
    empty.write_text("")
    with pytest.raises(SessionFormatError, match="line 1"):
        load_session(empty)


def test_load_truncated_file_names_last_valid_trial(tmp_path):
    store = _session(seed=SEED_EXP + 17)
    path = tmp_path / "session.jsonl"
    persist_session(store, path)
    text = path.read_text()
    truncated = tmp_path / "truncated.jsonl"
    truncated.write_text(text[:len(text) - 40])
    with pytest.raises(SessionFormatError,
                       match=store.trials[-2].trial_id):
        load_session(truncated)


def test_write_aggregate_csv(tmp_path):
    store = _respond_all(_session(seed=SEED_EXP + 18), _stochastic_observer(),
                         SEED_EXP + 18)
    table = aggregate(store)
    path = tmp_path / "matrix.csv"
    write_aggregate_csv(table, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "du,dz,n,phat"
    assert len(lines) == 26
    parsed = {}
    for line in lines[1:]:
        du, dz, n, phat = line.split(",")
        parsed[(float(du), float(dz))] = (int(n), float(phat))
    assert parsed == table
    keys = [tuple(map(float, line.split(",")[:2])) for line in lines[1:]]
    assert keys == sorted(keys)
