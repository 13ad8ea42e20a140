"""
Simulator for storing energy-time entangled photons in an atomic frequency
comb (AFC) memory and testing the stored entanglement

This module provides:
- Two-qubit time-bin states, CHSH and fidelity (qstate)
- Franson and hybrid-qubit Bell protocols with their POVM (protocol)
- Comb design and echo propagation through a minimum-phase filter (afc)
- Event-level and count-level Monte Carlo of the experiment (montecarlo)
- Delay histograms, g2, fringe fits and CHSH correlators (coincidence)
- Scenario runners and the afclab command line (experiments, cli)
"""

__version__ = "0.1.0"

from .afc import (
    CombSpectrum,
    EchoReport,
    FrequencyGrid,
    TimeEnvelope,
    build_comb,
    double_readout_comb,
    echo_report,
    propagate,
    transfer_function,
)
from .coincidence import (
    CorrelatorEstimate,
    DelayHistogram,
    VisibilityFit,
    WindowCount,
    chsh_S,
    correlator,
    fit_visibility,
    g2si,
    histogram,
)
from .experiments import (
    EfficiencyTable,
    Scenario,
    bell_test,
    fringe_scan,
    scan_pump_power,
    scan_storage_time,
)
from .montecarlo import (
    ChannelConfig,
    DetectorConfig,
    PathAmplitudeTable,
    SourceConfig,
    TagStream,
    detect,
    generate_pairs,
    route_pair,
    run_experiment,
)
from .protocol import (
    AnalyzerSetting,
    HybridBudget,
    HybridPOVM,
    franson_prob,
    hybrid_observables,
    hybrid_povm,
    hybrid_predicted_S,
    hybrid_theta,
)
from .qstate import (
    DensityMatrix,
    Observable,
    StateVector,
    asymmetric_state,
    bell_state,
    chsh,
    expectation,
    werner,
)

__all__ = [
    'AnalyzerSetting',
    'ChannelConfig',
    'CombSpectrum',
    'CorrelatorEstimate',
    'DelayHistogram',
    'DensityMatrix',
    'DetectorConfig',
    'EchoReport',
    'EfficiencyTable',
    'FrequencyGrid',
    'HybridBudget',
    'HybridPOVM',
    'Observable',
    'PathAmplitudeTable',
    'Scenario',
    'SourceConfig',
    'StateVector',
    'TagStream',
    'TimeEnvelope',
    'VisibilityFit',
    'WindowCount',
    'asymmetric_state',
    'bell_state',
    'bell_test',
    'build_comb',
    'chsh',
    'chsh_S',
    'correlator',
    'detect',
    'double_readout_comb',
    'echo_report',
    'expectation',
    'fit_visibility',
    'franson_prob',
    'fringe_scan',
    'g2si',
    'generate_pairs',
    'histogram',
    'hybrid_observables',
    'hybrid_povm',
    'hybrid_predicted_S',
    'hybrid_theta',
    'propagate',
    'route_pair',
    'run_experiment',
    'scan_pump_power',
    'scan_storage_time',
    'transfer_function',
    'werner',
]
