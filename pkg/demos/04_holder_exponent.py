# Measure the cusp regularity.  At a breaking point the profile behaves like
# |x - x*|^(1 - 1/k) with k = 2(lambda + 1): square-root cusps for
# Camassa-Holm, |x|^(3/4) for Novikov.  The exponent comes out of a log-log
# fit of |u - u*| against |x - x*| around the detected cusp.

from charflow import GaussianBump, RunConfig, holder_fit_at_cusp, run, validate_params

for lam in (0, 1):
    params = validate_params(lam=lam, L=15.0, N=4096)
    u0 = GaussianBump(amplitude=1.0, width=0.5)
    cfg = RunConfig(dt=1e-3, T_end=2.0, snapshot_every=500, check_every=250,
                    energy_drift_limit=1e-4)
    result = run(u0, params, cfg)
    fit = holder_fit_at_cusp(result.deepest.state, params)
    ref = 1.0 - 1.0 / params.k
    print(f"lambda={lam} (k={params.k}): fitted exponent {fit.exponent:.3f} "
          f"(sides {fit.side_exponents[0]:.3f}/{fit.side_exponents[1]:.3f}), "
          f"reference {ref:.3f}, fit window [{fit.inner:.2e}, {fit.outer}]")
