"""Learned load balancing: a hierarchical MLP maps keys onto a hash ring in place of a hash function."""

from .baselines import BoundedLoadPolicy, CHBalancer, CHBLBalancer, CHRing, ch_assign, chbl_assign
from .datagen import DistributionSpec, generate, read_dataset, write_dataset
from .hashing import HashFn, bkdr_hash, fnv1a_32, murmur3_32
from .metrics import compare_table, sorted_bin_counts, std_metric
from .model import HierConfig, HierModel, load_model, save_model
from .nn import MLP, AdamState, adam_step, backward, forward
from .ring import RingConfig, arcs_between, clockwise_successor
from .servers import MigrationRecord, ServerTable
from .sim import ClusterSpec, run_sim, summarize
from .trainer import TrainReport, train

__version__ = "0.1.0"
