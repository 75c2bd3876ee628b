"""Outage analysis and throughput optimization for a fluid-antenna receiver
served through a reconfigurable reflecting surface, with a Monte Carlo
channel oracle for verification."""

from .blockapprox import (
    BlockStructure,
    build_block_matrix,
    count_blocks,
    fit_block_sizes,
    fit_for_config,
)
from .channel import (
    ChannelDraw,
    CorrelationMatrix,
    PathlossPair,
    SystemConfig,
    build_config,
    constant_correlation,
    jakes_correlation,
    sample_ports_csi_based,
    sample_ports_csi_free,
)
from .errors import ConfigError, NumericError
from .montecarlo import EmpiricalPdf, McResult, empirical_pdf, estimate_outage, estimate_throughput
from .optimize import (
    RateBounds,
    ThroughputSolution,
    bsm_csi_based,
    closed_form_csi_free,
    exhaustive,
    gda_csi_based,
    pgda_csi_free,
    tbar,
    tcheck,
)
from .outage import (
    OutageEstimate,
    OutageQuery,
    apply_overhead,
    batch_evaluate,
    csi_based_bcma,
    csi_based_iae,
    csi_based_moments,
    csi_free_bcma,
    csi_free_iae,
    csi_free_moments,
    constant_model,
)

__version__ = "0.1.0"
