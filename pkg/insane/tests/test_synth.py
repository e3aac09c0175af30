import numpy as np
import pytest

from insane.data.models import DomainClass, VoltageWaveform
from insane.data.synth import (
    AnomalyConfig,
    LayoutConfig,
    LayoutKind,
    LoopParams,
    SynthConfig,
    default_read_index,
    disk_pixel_count,
    generate,
    generate_labels,
    loop_model,
)
from insane.exceptions import ConfigError, ParameterError


@pytest.fixture
def two_stripe_config():
    """16x16 grid split into an up stripe and an in-plane stripe"""
    return SynthConfig(
        height=16,
        width=16,
        spectrum_len=32,
        layout=LayoutConfig(kind=LayoutKind.STRIPE, n_domains=2),
        anomaly=AnomalyConfig(count=0),
    )


def test_disk_pixel_count():
    """Test lattice points inside a disk"""
    assert disk_pixel_count(0) == 1
    assert disk_pixel_count(1) == 5
    assert disk_pixel_count(2) == 13


def test_stripe_layout_counts(two_stripe_config):
    """Test two stripes give two wall columns and 112 pixels per class"""
    histogram = generate(two_stripe_config).label_histogram()

    assert histogram["wall"] == 32
    assert histogram["up"] == 112
    assert histogram["in_plane"] == 112
    assert histogram["down"] == 0
    assert histogram["anomaly"] == 0


def test_wall_columns_sit_on_the_boundary(two_stripe_config):
    """Test walls are the two columns either side of the stripe boundary"""
    labels = generate_labels(two_stripe_config)

    walls = np.argwhere(labels == DomainClass.WALL)
    assert set(walls[:, 1].tolist()) == {7, 8}


def test_default_dataset_has_one_anomaly_disk():
    """Test the default config plants a single radius-2 disk"""
    cfg = SynthConfig()
    labels = generate_labels(cfg)

    assert np.sum(labels == DomainClass.ANOMALY) == 13
    assert cfg.expected_anomaly_fraction() == pytest.approx(13 / 4096)

    rows, cols = np.nonzero(labels == DomainClass.ANOMALY)
    reach = cfg.anomaly.radius + cfg.anomaly.edge_margin
    assert rows.min() >= reach - cfg.anomaly.radius
    assert rows.max() < cfg.height - reach + cfg.anomaly.radius
    assert cols.min() >= reach - cfg.anomaly.radius
    assert cols.max() < cfg.width - reach + cfg.anomaly.radius


def test_anomaly_must_fit_the_grid(two_stripe_config):
    """Test a disk plus edge margin wider than the grid is rejected"""
    cfg = two_stripe_config.model_copy(update={"anomaly": AnomalyConfig(count=1)})

    with pytest.raises(ConfigError):
        generate(cfg)


def test_generate_is_deterministic(small_synth_config):
    """Test the same seed gives identical bytes and a new seed only changes noise"""
    first = generate(small_synth_config, seed=5)
    second = generate(small_synth_config, seed=5)
    other = generate(small_synth_config, seed=6)

    assert first.spectra.tobytes() == second.spectra.tobytes()
    assert first.content_hash() == second.content_hash()
    assert other.spectra.tobytes() != first.spectra.tobytes()
    np.testing.assert_array_equal(other.labels, first.labels)


def test_image_is_read_index_slice(small_dataset):
    """Test the image copies the spectra at the read index"""
    index = default_read_index(small_dataset.waveform)

    np.testing.assert_array_equal(small_dataset.image, small_dataset.spectra[:, :, index])


def test_default_read_index_is_descending_zero_crossing():
    """Test the read index on the default sweep"""
    waveform = VoltageWaveform.triangular(length=64)

    assert default_read_index(waveform) == 48


def test_read_index_out_of_range(small_synth_config):
    """Test a read index past the spectrum end"""
    cfg = small_synth_config.model_copy(update={"read_index": 32})

    with pytest.raises(ConfigError):
        generate(cfg)


def test_loop_model_branches():
    """Test noiseless ascending and descending branch values"""
    waveform = VoltageWaveform.triangular(length=64)
    loop = loop_model(LoopParams(noise=0.0), waveform)

    assert loop[16] == pytest.approx(np.tanh(-4.0))
    assert loop[48] == pytest.approx(np.tanh(4.0))
    assert loop[32] == pytest.approx(np.tanh(8.0))


def test_split_loop_is_two_half_steps():
    """Test a split loop averages two tanh steps"""
    waveform = VoltageWaveform.triangular(length=64)
    p = LoopParams(amplitude=0.8, coercive_voltage=1.2, width=0.15, split=0.9, noise=0.0)

    loop = loop_model(p, waveform)

    expected = 0.4 * (np.tanh((0.0 - 2.1) / 0.15) + np.tanh((0.0 - 0.3) / 0.15))
    assert loop[16] == pytest.approx(expected)


def test_loop_model_parameter_errors():
    """Test bad widths, negative noise and noise without a generator"""
    waveform = VoltageWaveform.triangular(length=16)

    with pytest.raises(ParameterError):
        loop_model(LoopParams(width=0.0, noise=0.0), waveform)
    with pytest.raises(ParameterError):
        loop_model(LoopParams(noise=-0.1), waveform)
    with pytest.raises(ParameterError):
        loop_model(LoopParams(noise=0.1), waveform)


def test_voronoi_layout_depends_on_layout_seed():
    """Test Voronoi labels change with the layout seed only"""
    cfg = SynthConfig(height=32, width=32, anomaly=AnomalyConfig(count=0))
    reseeded = cfg.model_copy(update={"layout": LayoutConfig(seed=8), "seed": 99})
    renoised = cfg.model_copy(update={"seed": 99})

    np.testing.assert_array_equal(generate_labels(cfg), generate_labels(renoised))
    assert not np.array_equal(generate_labels(cfg), generate_labels(reseeded))


@pytest.fixture(scope="module")
def default_dataset():
    """The 64x64 dataset produced by an empty config"""
    return generate(SynthConfig())


def class_mean_loops(ds):
    flat = ds.flat_spectra().astype(np.float64)
    labels = ds.labels.ravel()
    return {cls: flat[labels == cls].mean(axis=0) for cls in DomainClass if np.any(labels == cls)}


def test_default_layout_has_every_domain_class(default_dataset):
    """Test the default Voronoi layout shows up, down, in-plane, wall and anomaly"""
    histogram = default_dataset.label_histogram()

    assert all(count > 0 for count in histogram.values())


def test_in_plane_has_lowest_snr(default_dataset):
    """Test in-plane loops are the weakest while every class shares one noise level"""
    classes = SynthConfig().classes
    assert abs(classes.in_plane.amplitude) < min(abs(classes.up.amplitude), abs(classes.down.amplitude))
    assert classes.in_plane.noise == classes.up.noise == classes.down.noise

    means = class_mean_loops(default_dataset)
    half_swing = {cls: 0.5 * np.ptp(loop) for cls, loop in means.items()}
    assert half_swing[DomainClass.IN_PLANE] < half_swing[DomainClass.UP]
    assert half_swing[DomainClass.IN_PLANE] < half_swing[DomainClass.DOWN]


def test_anomaly_loop_is_distinct(default_dataset):
    """Test the anomaly mean loop is far from every other class mean loop"""
    sigma = SynthConfig().anomaly.loop.noise
    means = class_mean_loops(default_dataset)

    anomaly = means.pop(DomainClass.ANOMALY)
    for loop in means.values():
        assert np.linalg.norm(anomaly - loop) > 10 * sigma


def test_anomaly_stands_out_in_image(default_dataset):
    """Test the read-voltage image separates anomaly pixels from the rest"""
    cfg = SynthConfig()
    waveform = cfg.waveform()
    index = default_read_index(waveform)

    def read_value(p):
        return loop_model(p.model_copy(update={"noise": 0.0}), waveform)[index]

    anomaly_value = read_value(cfg.anomaly.loop)
    for cls in (DomainClass.UP, DomainClass.DOWN, DomainClass.IN_PLANE, DomainClass.WALL):
        assert abs(anomaly_value - read_value(cfg.classes.for_class(cls))) > 0.5

    anomaly = default_dataset.labels == DomainClass.ANOMALY
    image = default_dataset.image.astype(np.float64)
    gap = np.abs(image[anomaly][:, None] - image[~anomaly][None, :]).min()
    assert gap > 0.3
