from .pit import (
    CategoryGrouping,
    LossReport,
    category_pit_loss,
    fixed_output_pit_loss,
    ordered_mean,
)
from .snr import (
    evaluate_pair,
    neg_snr_loss,
    si_snr,
    si_snr_db,
    snr,
    snr_db,
    zero_aware_snr_loss,
)
