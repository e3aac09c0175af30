import numpy as np
import pytest

from insane.analysis.scalarize import loop_area, scalarize_grid
from insane.data.models import DomainClass, VoltageWaveform
from insane.data.synth import (
    AnomalyConfig,
    LayoutConfig,
    LayoutKind,
    LoopParams,
    SynthConfig,
    generate,
    loop_model,
)
from insane.exceptions import DimensionError


@pytest.fixture
def square_waveform():
    return VoltageWaveform(volts=[-1.0, -1.0, 1.0, 1.0])


@pytest.fixture
def tanh_loop():
    """Noiseless default loop on the 64-sample sweep"""
    waveform = VoltageWaveform.triangular(length=64)
    return waveform, loop_model(LoopParams(noise=0.0), waveform)


def test_square_loop_area(square_waveform):
    """Test a 2x2 square loop encloses area 4"""
    assert loop_area(np.array([-1.0, 1.0, 1.0, -1.0]), square_waveform) == pytest.approx(4.0)


def test_constant_spectrum_has_zero_area(square_waveform):
    """Test a flat response encloses nothing"""
    assert loop_area(np.full(4, 0.7), square_waveform) == 0.0


def test_area_matches_trapezoid_integral(tanh_loop):
    """Test the area equals the branch-by-branch trapezoid integral"""
    waveform, loop = tanh_loop
    volts = waveform.volts.astype(np.float64)

    ascending = np.trapz(loop[0:33], volts[0:33])
    closing = np.r_[np.arange(32, 64), 0]
    descending = np.trapz(loop[closing], volts[closing])

    assert loop_area(loop, waveform) == pytest.approx(abs(ascending + descending), abs=1e-9)


def test_area_scales_with_amplitude(tanh_loop):
    """Test scaling the response scales the area by |c|"""
    waveform, loop = tanh_loop
    base = loop_area(loop, waveform)

    assert loop_area(2.0 * loop, waveform) == base * 2.0
    assert loop_area(0.5 * loop, waveform) == base * 0.5
    assert loop_area(-3.0 * loop, waveform) == pytest.approx(3.0 * base, rel=1e-12)


def test_area_ignores_offset_and_direction(tanh_loop):
    """Test a vertical offset and a reversed traversal keep the area"""
    waveform, loop = tanh_loop
    base = loop_area(loop, waveform)
    reversed_waveform = VoltageWaveform(volts=waveform.volts[::-1])

    assert loop_area(loop + 5.0, waveform) == pytest.approx(base, abs=1e-12)
    assert loop_area(loop[::-1], reversed_waveform) == pytest.approx(base, abs=1e-12)


def test_area_length_mismatch(square_waveform):
    """Test a spectrum of the wrong length"""
    with pytest.raises(DimensionError):
        loop_area(np.zeros(5), square_waveform)


def test_scalarize_grid_flags_single_loop(dataset_factory):
    """Test a single looped pixel in a flat grid"""
    spectra = np.zeros((6, 6, 16))
    waveform = VoltageWaveform.triangular(length=16)
    spectra[2, 4] = loop_model(LoopParams(noise=0.0), waveform)
    ds = dataset_factory(spectra)

    areas = scalarize_grid(ds)

    assert areas.shape == (6, 6)
    assert np.count_nonzero(areas) == 1
    assert areas[2, 4] > 0


def test_scalarize_grid_constant_dataset(constant_dataset):
    """Test identical spectra give identical areas"""
    areas = scalarize_grid(constant_dataset)

    assert np.all(areas == areas[0, 0])


def test_switching_classes_outscore_in_plane():
    """Test up and down domains enclose more area than in-plane ones"""
    cfg = SynthConfig(
        height=32,
        width=32,
        layout=LayoutConfig(kind=LayoutKind.STRIPE, n_domains=4),
        anomaly=AnomalyConfig(count=0),
    )
    ds = generate(cfg)
    areas = scalarize_grid(ds)

    up = areas[ds.labels == DomainClass.UP].mean()
    down = areas[ds.labels == DomainClass.DOWN].mean()
    in_plane = areas[ds.labels == DomainClass.IN_PLANE].mean()
    assert up > 5 * in_plane
    assert down > 5 * in_plane
