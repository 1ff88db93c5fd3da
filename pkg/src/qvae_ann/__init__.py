"""Approximate nearest-neighbour search over binary codes learned by a discrete VAE
whose prior is a (classical or transverse-field) Boltzmann machine."""

from .boltzmann import RbmParams, block_gibbs, cd_gradients, exact_log_partition, exact_pmf, rbm_energy
from .data import generate_synthetic, load_dataset, save_dataset, standardize
from .errors import CapabilityError, ContractViolation, FormatError, NumericFailure
from .index import (
    InvertedIndex,
    QueryConfig,
    build_index,
    hamming_sorted_buckets,
    linear_search,
    load_index,
    memory_report,
    query,
    save_index,
)
from .model import QvaeConfig, QvaeModel, hash_codes, load_model, save_model, train
from .quantum import IsingModel, TrotterConfig, bm_to_ising, estimate_beta_eff, exact_qbm_pmf, piqmc_sample

__version__ = "0.1.0"
