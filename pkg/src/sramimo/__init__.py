"""Multiuser uplink reception with nested and coprime sparse arrays."""

__version__ = "0.1.0"

from .geometry import (  # noqa: E402
    SensorLayout,
    CoarrayProfile,
    build_ula,
    build_tlna,
    build_cpa,
    custom_layout,
    difference_coarray,
    virtual_half_extent,
    parse_geometry,
    geometry_report,
)
from .channel import (  # noqa: E402
    AnglePolicy,
    ChannelRealization,
    SnapshotBlock,
    steering_vector,
    draw_channel,
    generate_symbols,
    received_block,
)
from .constellation import QPSK, get_constellation  # noqa: E402
from .virtualization import (  # noqa: E402
    AugmentedManifold,
    SmoothedCovariance,
    VirtualSnapshot,
    augmented_manifold,
    augmented_steering,
    deduplicate_and_sort,
    exact_covariance,
    sample_covariance,
    spatial_smoothing,
    synthesize_augmented_snapshots,
    vectorize_covariance,
)
from .receivers import (  # noqa: E402
    DetectionResult,
    FilterBank,
    detect_linear,
    filter_bank,
    interference_plus_noise_cov,
    mmse_filter,
    osic_detect,
)
from .metrics import achievable_sum_rate, bit_error_rate, complexity_report, sinr  # noqa: E402
from .sim import SimConfig, SweepResult, run_sweep  # noqa: E402
