#pragma once

namespace lrstep {

/// Standard normal quantile (Wichura's AS 241, PPND16).
double normal_quantile(double p);

/// P(X > x) for X ~ chi-squared with one degree of freedom.
double chi2_upper_tail_df1(double x);

/// Value q with P(X > q) = tail for X ~ chi-squared(1). Computed as the
/// square of the two-sided normal critical value.
double chi2_quantile_df1(double tail);

}  // namespace lrstep
