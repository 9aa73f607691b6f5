"""Core simulator components."""

from .assignment import Assignment, km_assign
from .baseline import CommLedger, FedAvgConfig, FedAvgResult, fedavg_round, run_fedavg
from .client import (
    ClientConfig,
    Clustering,
    DistributionParameter,
    EncoderConfig,
    LatentPoint,
    UploadMessage,
    client_upload,
    cluster,
    dp_release,
    encode,
    estimate_params,
)
from .downstream import Classifier, evaluate, generate, train_classifier, utility_loss
from .generator import DistributionGenerator, GaussianGenerator
from .mixture import (
    BaseDistribution,
    ClientShard,
    EntanglementReport,
    MixtureSpec,
    entangle_coeff,
    entanglement_report,
    partition_for_xi,
    sample_mixture,
)
from .results_writer import ResultsWriter
from .run_config import RunConfig, SweepGrid, TheoryConfig, dp_epsilon
from .server import AlignmentResult, align, broadcast, pairwise_cost
from .simulator import RunMetrics, Simulator, run, sweep
from .theory import (
    BoundSpec,
    hoeffding_tail,
    dominance_check,
    monte_carlo_utility,
    utility_bound,
    entangled_bound,
)

__all__ = [
    'Assignment', 'km_assign',
    'CommLedger', 'FedAvgConfig', 'FedAvgResult', 'fedavg_round', 'run_fedavg',
    'ClientConfig', 'Clustering', 'DistributionParameter', 'EncoderConfig', 'LatentPoint',
    'UploadMessage', 'client_upload', 'cluster', 'dp_release', 'encode', 'estimate_params',
    'Classifier', 'evaluate', 'generate', 'train_classifier', 'utility_loss',
    'DistributionGenerator', 'GaussianGenerator',
    'BaseDistribution', 'ClientShard', 'EntanglementReport', 'MixtureSpec',
    'entangle_coeff', 'entanglement_report', 'partition_for_xi', 'sample_mixture',
    'ResultsWriter',
    'RunConfig', 'SweepGrid', 'TheoryConfig', 'dp_epsilon',
    'AlignmentResult', 'align', 'broadcast', 'pairwise_cost',
    'RunMetrics', 'Simulator', 'run', 'sweep',
    'BoundSpec', 'hoeffding_tail', 'dominance_check', 'monte_carlo_utility', 'utility_bound', 'entangled_bound',
]
