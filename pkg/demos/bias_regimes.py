# Three regimes of non-classical measurement error.
#
# When the error u is correlated with the true signal X*, the OLS slope of an
# outcome on the mismeasured regressor converges to factor * beta with
#
#     factor = (var X* + cov(X*, u)) / (var X* + var u + 2 cov(X*, u)).
#
# Depending on corr(X*, u) the factor attenuates (0 < factor < 1), inflates
# (factor > 1), or flips the sign (factor < 0). bias_regime classifies the
# configuration; this script verifies each regime by brute-force simulation.
#
# Run:  python3 demos/bias_regimes.py

import numpy as np

from earnlink import (
    DgpConfig,
    ErrorProcessParams,
    IncomeProcessParams,
    OutcomeSpec,
    bias_regime,
    ols_fit,
    oracle,
    simulate_panel,
)

SIGNAL_VAR = 0.1

# delta scales cov(X*, u) = delta * var X*; noise_var tops up var u.
CASES = [
    ("classical", 0.0, 0.04),
    ("mild mean reversion", -0.3, 0.04),
    ("inflating", -0.5, 0.001),
    ("sign reversal", -1.2, 0.256),
]

print(f"{'case':>20} {'corr(X*,u)':>11} {'regime':>15} {'factor':>9} {'slope':>9}")
for label, delta, noise_var in CASES:
    cfg = DgpConfig(
        n_units=50_000,
        n_periods=1,
        income=IncomeProcessParams(rho=0.0, innovation_var=SIGNAL_VAR,
                                   mean_log_income=7.0),
        error=ErrorProcessParams(delta=delta, noise_var=noise_var),
        outcome=OutcomeSpec(beta=1.0, residual_var=0.01),
        seed=909,
    )
    values = oracle(cfg)
    regime = bias_regime(values.sigma2_signal, values.sigma2_error,
                         values.corr_signal_error)
    panel = simulate_panel(cfg)
    fit = ols_fit(panel.column("outcome_true"),
                  {"report": panel.column("log_survey")})
    print(f"{label:>20} {values.corr_signal_error:>11.3f} {regime.regime:>15} "
          f"{regime.factor:>9.4f} {fit.coefficients['report']:>9.4f}")

print()
print("The regime boundaries depend only on the variance ratio:")
vs, vu = SIGNAL_VAR, 0.4
print(f"  var X* = {vs}, var u = {vu}")
print(f"  sign preserved while corr > -sqrt(vs/vu) = {-np.sqrt(vs / vu):.4f}")
print(f"  bias turns positive below corr < -sqrt(vu/vs) = {-np.sqrt(vu / vs):.4f}"
      " (unreachable here since |corr| <= 1)")
