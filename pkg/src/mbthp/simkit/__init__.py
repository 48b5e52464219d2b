"""Monte-Carlo sweeps, experiment configuration and the command-line tool."""
from mbthp.simkit.config import (CSV_HEADER, ExperimentConfig, PrecoderSpec, ResultRow,
                                 load_config, parse_ebno_range, parse_precoder)
from mbthp.simkit.engine import (CovarianceCheck, noise_variance, run_ber,
                                 run_covariance_check, run_sumrate)

__all__ = ["CSV_HEADER", "ExperimentConfig", "PrecoderSpec", "ResultRow", "load_config",
           "parse_ebno_range", "parse_precoder", "CovarianceCheck", "noise_variance",
           "run_ber", "run_covariance_check", "run_sumrate"]
