import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mudec import synthgen as sg
from mudec.errors import ParameterError


def _single_unit_pool(threshold=0.1):
    return sg.MotorUnitPool(1, [threshold], 8.0, 30.0, [1.0], [50.0], isi_cv=0.1)


def _short_spec(**kw):
    base = dict(duration_s=4.0, onset_s=0.5, ramp_s=1.0, plateau_s=1.0, plateau_level_frac_mvf=0.5, seed=3)
    base.update(kw)
    return sg.TrialSpec(**base)


@pytest.fixture(scope="module")
def easy():
    return sg.default_scenario("easy", seed=0)


def test_identity_mixing_reproduces_spike_train():
    pool = _single_unit_pool()
    mix = sg.MixingModel(np.ones((1, 1, 1)), 0.0)
    spec = _short_spec()
    n = int(spec.duration_s * sg.EMG_RATE_HZ)
    trial = sg.generate_trial(pool, mix, spec, drive=np.full(n, 0.6))
    expected = trial.truth_spikes.binary()[0]
    assert trial.truth_spikes.spikes[0].size > 50
    assert np.array_equal(trial.emg.data[0], expected)


def test_zero_drive_gives_no_spikes_and_no_force():
    pool = _single_unit_pool()
    mix = sg.MixingModel(np.ones((1, 2, 5)), 0.0)
    spec = _short_spec()
    n = int(spec.duration_s * sg.EMG_RATE_HZ)
    trial = sg.generate_trial(pool, mix, spec, drive=np.zeros(n))
    assert trial.truth_spikes.spikes[0].size == 0
    assert np.all(trial.force.data == 0)
    assert np.all(trial.emg.data == 0)


def test_regeneration_bit_identical(easy):
    a = sg.generate_trial(easy.pool, easy.mix, easy.specs[0])
    b = sg.generate_trial(easy.pool, easy.mix, easy.specs[0])
    assert np.array_equal(a.emg.data, b.emg.data)
    assert np.array_equal(a.force.data, b.force.data)
    assert all(np.array_equal(x, y) for x, y in zip(a.truth_spikes.spikes, b.truth_spikes.spikes))


def test_easy_scenario_contract(easy):
    assert len(easy.specs) == 10
    assert all(s.duration_s == 30.0 for s in easy.specs)
    assert len({s.seed for s in easy.specs}) == 10
    assert easy.pool.n_units == 8
    assert easy.mix.n_channels == 64
    assert easy.snr_db == 20.0
    assert {k: len(v) for k, v in easy.mix.channel_groups.items()} == {"flexor": 44, "extensor": 20}


def test_medium_groups_match_array_sizes():
    med = sg.default_scenario("medium", seed=1, n_trials=2)
    assert {k: len(v) for k, v in med.mix.channel_groups.items()} == {"flexor": 128, "extensor": 64}
    assert med.pool.n_units == 20 and med.snr_db == 10.0


def test_hard_is_deterministic():
    a = sg.default_scenario("hard", seed=5, n_trials=3)
    b = sg.default_scenario("hard", seed=5, n_trials=3)
    assert a.specs == b.specs
    assert np.array_equal(a.mix.muap_templates, b.mix.muap_templates)
    assert a.snr_db == 5.0


def test_unknown_scenario():
    with pytest.raises(ParameterError):
        sg.default_scenario("extreme")


def test_snr_matches_target(easy):
    trial = sg.generate_trial(easy.pool, easy.mix, easy.specs[1])
    clean = sg.render_emg(trial.truth_spikes.spikes, easy.mix.muap_templates, trial.emg.n_samples)
    assert sg.measured_snr_db(trial, clean) == pytest.approx(20.0, abs=1.0)


def test_force_normalised_to_plateau_level(easy):
    trial = sg.generate_trial(easy.pool, easy.mix, easy.specs[2])
    plateau = trial.spec.plateau_mask()
    assert trial.force.data[0, plateau].mean() == pytest.approx(50.0, rel=1e-9)
    assert np.all(trial.force.data >= 0)
    first = min(s[0] for s in trial.truth_spikes.spikes if s.size)
    assert np.all(trial.force.data[0, : first + 1] == 0)


def test_superposition_of_per_unit_renders(easy):
    spec = _short_spec(seed=11)
    n = int(spec.duration_s * sg.EMG_RATE_HZ)
    spikes = sg.discharge_times(easy.pool, spec.drive(), sg.EMG_RATE_HZ, np.random.default_rng(0))
    total = sg.render_emg(spikes, easy.mix.muap_templates, n)
    parts = sum(
        sg.render_emg([spikes[u]], easy.mix.muap_templates[u : u + 1], n) for u in range(easy.pool.n_units)
    )
    assert np.max(np.abs(total - parts)) <= 1e-9 * max(np.abs(total).max(), 1e-30)


@settings(max_examples=15, deadline=None)
@given(lo=st.floats(0.05, 0.9), hi=st.floats(0.05, 1.0), seed=st.integers(0, 1000))
def test_spike_counts_monotone_in_level(lo, hi, seed):
    lo, hi = sorted((lo, hi))
    pool = sg.default_scenario("easy", seed=0, n_trials=1).pool
    counts = []
    for level in (lo, hi):
        spec = _short_spec(plateau_level_frac_mvf=level, seed=seed)
        spikes = sg.discharge_times(pool, spec.drive(), sg.EMG_RATE_HZ, np.random.default_rng(seed))
        counts.append([s.size for s in spikes])
    assert all(b >= a for a, b in zip(*counts))


def test_rate_within_pool_bounds(easy):
    trial = sg.generate_trial(easy.pool, easy.mix, easy.specs[0])
    plateau = trial.spec.plateau_mask()
    start, stop = np.flatnonzero(plateau)[[0, -1]]
    for s in trial.truth_spikes.spikes:
        inside = s[(s >= start) & (s <= stop)]
        rate = (inside.size - 1) / ((inside[-1] - inside[0]) / sg.EMG_RATE_HZ)
        assert easy.pool.min_rate_hz * 0.9 <= rate <= easy.pool.peak_rate_hz * 1.1


def test_twitch_kernel_shape():
    k = sg.twitch_kernel(50.0, 1000.0)
    assert k[0] == 0.0
    assert int(np.argmax(k)) == 50 and k.max() == pytest.approx(1.0)


def test_hermite_muap_peak_and_zero_mean_tails():
    w = sg.hermite_muap(21, 3.0)
    assert w[10] == pytest.approx(1.0)
    assert abs(w[0]) < 1e-3 and abs(w[-1]) < 1e-3


@pytest.mark.parametrize(
    "kw",
    [
        dict(recruitment_thresholds=[0.2, 0.1]),
        dict(min_rate_hz=30.0, peak_rate_hz=8.0),
        dict(isi_cv=0.7),
        dict(recruitment_thresholds=[0.1, 1.0]),
    ],
)
def test_pool_validation(kw):
    base = dict(n_units=2, recruitment_thresholds=[0.1, 0.2], min_rate_hz=8.0, peak_rate_hz=30.0,
                twitch_amplitudes=[1.0, 2.0], twitch_time_constants_ms=[50.0, 40.0], isi_cv=0.1)
    base.update(kw)
    with pytest.raises(ParameterError):
        sg.MotorUnitPool(**base)


def test_spec_validation():
    with pytest.raises(ParameterError):
        sg.TrialSpec(duration_s=10.0, onset_s=2.0, ramp_s=5.0, plateau_s=14.0)
    with pytest.raises(ParameterError):
        sg.TrialSpec(plateau_level_frac_mvf=0.0)
    with pytest.raises(ParameterError):
        sg.MixingModel(np.ones((1, 1, 1)), -1.0)


def test_drive_is_trapezoid():
    spec = sg.TrialSpec(duration_s=10.0, onset_s=1.0, ramp_s=2.0, plateau_s=3.0, plateau_level_frac_mvf=0.5)
    d = spec.drive(100.0)
    assert d[50] == 0.0
    assert d[200] == pytest.approx(0.25)
    assert np.all(d[300:600] == 0.5)
    assert d[700] == pytest.approx(0.25)
    assert d[900] == 0.0
