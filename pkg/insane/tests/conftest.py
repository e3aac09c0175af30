import numpy as np
import pytest

from insane.agents.engine import ExperimentMode, RunConfig
from insane.analysis.surrogate import FitConfig
from insane.data.models import GridDataset, VoltageWaveform
from insane.data.storage import save_dataset
from insane.data.synth import (
    AnomalyConfig,
    LayoutConfig,
    LayoutKind,
    LoopParams,
    SynthConfig,
    generate,
    loop_model,
)


@pytest.fixture
def rng():
    """Seeded generator for random test inputs"""
    return np.random.default_rng(20240601)


@pytest.fixture
def small_synth_config():
    """24x24 four-stripe layout without anomalies"""
    return SynthConfig(
        height=24,
        width=24,
        spectrum_len=32,
        layout=LayoutConfig(kind=LayoutKind.STRIPE, n_domains=4, seed=3),
        anomaly=AnomalyConfig(count=0),
    )


@pytest.fixture
def small_dataset(small_synth_config):
    """Synthetic dataset built from small_synth_config"""
    return generate(small_synth_config, seed=0)


@pytest.fixture
def dataset_dir(tmp_path, small_dataset):
    """small_dataset saved to a temporary directory"""
    path = tmp_path / "dataset"
    save_dataset(small_dataset, path)
    return path


@pytest.fixture
def dataset_factory():
    """Build a GridDataset from spectra; the image is the first sample"""

    def build(spectra, volts=None, labels=None):
        spectra = np.asarray(spectra, dtype=np.float64)
        if volts is None:
            waveform = VoltageWaveform.triangular(length=spectra.shape[2])
        else:
            waveform = VoltageWaveform(volts=volts)
        return GridDataset(
            image=spectra[:, :, 0], spectra=spectra, waveform=waveform, labels=labels
        )

    return build


@pytest.fixture
def constant_dataset(dataset_factory):
    """20x20 grid where every pixel holds the same noiseless loop"""
    waveform = VoltageWaveform.triangular(length=32)
    loop = loop_model(LoopParams(noise=0.0), waveform)
    spectra = np.broadcast_to(loop, (20, 20, 32)).copy()
    return dataset_factory(spectra)


@pytest.fixture
def fast_run_config():
    """Short novelty run suitable for 24x24 grids"""
    return RunConfig(
        mode=ExperimentMode.NOVELTY,
        n_init=5,
        n_steps=12,
        patch_side=5,
        fit=FitConfig(epochs=5),
        eval_every=4,
    )
