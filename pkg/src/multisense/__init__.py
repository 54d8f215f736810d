"""Multi-device sensing simulator.

Library + CLI for composing (device, translation, model) execution
pipelines, selecting the best one at runtime via margin-based quality
assessment under a duty-cycled schedule, and evaluating selection
strategies on synthetic heterogeneous-device workloads.
"""

from .core import (ClassPosterior, Pipeline, SensorWindow, ValidationError,
                   validate_window)
from .models import Classifier, TrainingSet, fit_classifier, infer
from .orchestrator import (InferenceTrace, Registry, SelectionPolicy,
                           assess, margin, run, select)
from .synthworld import (AvailabilitySchedule, DeviceProfile, LatentTrace,
                         WorkloadConfig, WorldConfig, generate_latent,
                         observe, sample_availability)
from .translation import (TranslationOperator, alignment_distance,
                          apply_operator, fit_alignment)

__version__ = "0.1.0"
