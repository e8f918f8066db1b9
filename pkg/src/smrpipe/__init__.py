"""Offline classification of left/right/rest motor-imagery EEG epochs.

The pipeline chain: channel selection, 3-sigma outlier rejection, 8-30 Hz
Butterworth bandpass, common average reference, per-channel energy and
instantaneous-spectral-entropy features, then one of four classifiers
evaluated with a stratified 80/20 within-subject split.
"""

from .model import (ClassLabel, ClassTooSmall, EmptyDataset, Epoch,
                    N_CLASSES, PipelineError, Provenance, SplitIndices,
                    SubjectDataset, stratified_split)
from .io import (ChannelSelection, DEFAULT_MOTOR_CHANNELS, EpochFileHeader,
                 default_selection, read_epoch_file, read_header,
                 select_channels, write_epoch_file)
from .synth import SyntheticSpec, generate_subject, generate_synthetic
from .filters import (BiquadCascade, FilterSpec, apply_filter,
                      design_bandpass, frequency_response)
from .preprocess import (OutlierReport, apply_car, preprocess_dataset,
                         reject_outliers)
from .features import (FeatureVector, Spectrogram, energy, extract_dataset,
                       extract_features, instantaneous_spectral_entropy,
                       power_spectrum, spectral_entropy, spectrogram)
from .classifiers import (KnnModel, NnConfig, QdaModel, WideNnModel,
                          fit_model, knn_fit, knn_predict, load_model,
                          nn_fit, nn_predict, predict_label, predict_scores,
                          qda_fit, qda_predict, save_model)
from .evaluation import (BaselineTable, CorpusResult, MetricSet,
                         PUBLISHED_BASELINES, PipelineConfig, SubjectResult,
                         confusion, metrics_from_confusion, run_corpus,
                         run_subject)

__version__ = "0.1.0"
