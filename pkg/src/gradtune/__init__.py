"""Gradual Tuning experiments: transfer learning with layer-wise unfreezing.

A library and CLI for training feed-forward multi-head networks, comparing
plain fine tuning against gradual tuning (head first, then unfreezing one
hidden layer at a time on validation plateaus), with generators for the
synthetic geometric stimulus tasks and MNIST digit-range splits used in
the experiments.
"""

from .dataset import ImageSplit, LabeledDataset, read_gtds, write_gtds, write_pgm
from .datasynth import (
    TASKS,
    Scene,
    Stimulus,
    generate_dataset,
    render,
    sample_scene,
    validate_scene,
)
from .exper import (
    ExperimentReport,
    ExperimentSpec,
    aggregate,
    build_report,
    emit_report,
    parse_spec_file,
    run_phase_a,
    run_phase_b,
)
from .mnist import DigitRangeSpec, build_split, read_idx, read_idx_images, read_idx_labels
from .net import (
    Architecture,
    Network,
    RegConfig,
    attach_head,
    backward,
    cross_entropy,
    forward,
    init_network,
    l1_penalty,
    load_checkpoint,
    relu,
    save_checkpoint,
    softmax,
)
from .numerics import SeededRng, argmax, derive_seed, matmul
from .train import (
    FreezeMask,
    TrainConfig,
    TuningState,
    evaluate,
    sgd_step,
    train_multitask,
    train_single,
    update_early_stop,
    update_gradual_phase,
)

__version__ = "0.1.0"
