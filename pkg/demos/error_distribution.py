# What does survey-register disagreement look like across the earnings
# distribution?
#
# With mean-reverting error, low earners overreport and high earners
# underreport. quantile_profile ranks observations by register income within
# each year and summarizes the error per quantile group; the gradient in the
# per-group means is the signature of mean reversion.
#
# Run:  python3 demos/error_distribution.py

from earnlink import (
    DgpConfig,
    ErrorProcessParams,
    IncomeProcessParams,
    histogram,
    quantile_profile,
    simulate_panel,
    summarize_errors,
)

cfg = DgpConfig(
    n_units=30_000,
    n_periods=1,
    income=IncomeProcessParams(rho=0.0, innovation_var=0.4, mean_log_income=7.2),
    error=ErrorProcessParams(delta=-0.25, noise_var=0.03, error_mean=-0.05),
    seed=321,
)
panel = simulate_panel(cfg)

summary = summarize_errors(panel, notion="log")
print("Pooled log-error distribution")
print(f"  mean {summary.mean:+.4f}   sd {summary.sd:.4f}   n {summary.n}")
print(f"  p5 {summary.p5:+.4f}  p25 {summary.p25:+.4f}  p50 {summary.p50:+.4f}"
      f"  p75 {summary.p75:+.4f}  p95 {summary.p95:+.4f}")
print(f"  share negative {summary.share_negative:.3f}"
      f"   geometric survey/register ratio {summary.geometric_ratio:.4f}")

print()
print("Mean log error by register-income quintile (mean reversion gradient)")
profile = quantile_profile(panel, n_quantiles=5, notion="log")
for q in sorted(profile.summaries):
    group = profile.summaries[q]
    bar = "#" * max(0, int(40 * (group.mean + 0.2) / 0.4))
    print(f"  q{q}: {group.mean:+.4f}  {bar}")

print()
print("Histogram of the log error (width 0.05), center of the distribution")
series = histogram(panel.column("log_error"), width=0.05,
                   value_range=(-0.6, 0.6), normal_overlay=True)
peak = series.counts.max()
for i, count in enumerate(series.counts):
    left = series.bin_edges[i]
    if count < peak * 0.01:
        continue
    print(f"  [{left:+.2f}) {'#' * int(50 * count / peak)}")
print(f"  underflow {series.underflow}, overflow {series.overflow}")
print(f"  matching normal: mean {series.normal_mean:+.4f}, sd {series.normal_sd:.4f}")
