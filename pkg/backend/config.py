import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Ridge prior hyperparameters for delta^{-1} ~ Gamma(c0, c1)
PRIOR_C0 = float(os.getenv("RIDGECAST_PRIOR_C0", "3"))
PRIOR_C1 = float(os.getenv("RIDGECAST_PRIOR_C1", "0.03"))

# Inverse-Gamma prior on sigma^2 (weakly informative)
SIGMA2_SHAPE = float(os.getenv("RIDGECAST_SIGMA2_SHAPE", "0.01"))
SIGMA2_RATE = float(os.getenv("RIDGECAST_SIGMA2_RATE", "0.01"))

# Horseshoe global scale (half-Cauchy scale of tau) and intercept prior variance
HORSESHOE_SCALE = float(os.getenv("RIDGECAST_HORSESHOE_SCALE", "1.0"))
INTERCEPT_VAR = float(os.getenv("RIDGECAST_INTERCEPT_VAR", "1e6"))

# MCMC chain lengths
MCMC_BURN = int(os.getenv("RIDGECAST_MCMC_BURN", "2000"))
MCMC_RETAIN = int(os.getenv("RIDGECAST_MCMC_RETAIN", "2000"))
MCMC_THIN = int(os.getenv("RIDGECAST_MCMC_THIN", "1"))

# Evaluation
QUANTILE_J = int(os.getenv("RIDGECAST_QUANTILE_J", "20"))
QUANTILE_TOL = float(os.getenv("RIDGECAST_QUANTILE_TOL", "1e-10"))

# Design and comparators
DEFAULT_HORIZONS = (1, 3)
TARGET_LAGS = (1, 2)
SURVEY_LAGS = (0, 1)
DEFAULT_FACTORS = int(os.getenv("RIDGECAST_DEFAULT_FACTORS", "5"))
