"""Typical sets, typical-set block codes and Tsallis q-typicality."""

__version__ = "0.1.0"

from aeptools.entropy import (  # noqa: E402
    Distribution,
    EntropyValue,
    QParam,
    Units,
    binary_entropy,
    exact_log_factorial,
    exact_log_multinomial,
    load_distribution,
    q_surprisal,
    sequence_log_probability,
    shannon_entropy,
    stirling_log_factorial,
    tsallis_entropy,
    typical_count_estimate,
)
from aeptools.typicality import (  # noqa: E402
    SetCensus,
    TypicalityReport,
    empirical_entropy_rate,
    enumerate_typical_set,
    estimate_q_concentration,
    estimate_typicality_probability,
    is_epsilon_typical,
    q_set_census,
    q_typicality_statistic,
    top_set_mass,
    typical_set_bounds,
)
from aeptools.coding import (  # noqa: E402
    CodeParams,
    Codeword,
    build_codebook,
    decode,
    encode,
    rate_sweep,
    reliability_estimate,
)
from aeptools.estimators import TypicalityClassifier, TypicalSetCodec  # noqa: E402
