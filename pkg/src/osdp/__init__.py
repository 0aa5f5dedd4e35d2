"""OSDP policies, mechanisms, audits and benchmarks."""

from .core import (NON_SENSITIVE, SENSITIVE, CompositionError, Database, DomainMismatchError,
                   EnumerationCapError, Policy, PrivacySpend, RecordDomain, Regime, compose_parallel,
                   compose_sequential, eosdp_neighbors, eosdp_to_osdp, is_relaxation, load_policy,
                   min_relaxation, osdp_neighbors, save_policy, split)
from .mechanisms import (MECHANISM_IDS, Histogram, Partition, ReleasedHistogram, SplitHistogram,
                         crossover_threshold, dawaz, keep_probability, laplace_mechanism, osdp_laplace,
                         osdp_laplace_l1, osdp_rr, osdp_rr_histogram, partition_mechanism, release,
                         suppress, zero_and_rescale)
from .noise import RngStream, laplace_sample, one_sided_laplace_sample

__version__ = "0.1.0"
