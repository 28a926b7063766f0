use proptest::prelude::*;
use volswap_core::adjusted::{adjusted_call_price, AdjustConfig, RealizedState};
use volswap_core::backtest::{run_backtests, uniform_dates, BacktestConfig, Strategy};
use volswap_core::hedge::{hedge_plan, strip_value};
use volswap_core::models::SvModelSpec;
use volswap_core::smile::{MarketSmile, Quote};
use volswap_core::volswap::price_seasoned;

/// Quadratic smile in log-moneyness, floored to stay positive.
fn skewed(atm: f64, skew: f64, curv: f64, t: f64) -> MarketSmile {
    let quotes = (0..121)
        .map(|i| {
            let x = -3.0 + 0.05 * i as f64;
            Quote::new(100.0 * f64::exp(x), (atm + skew * x + curv * x * x).max(0.05))
        })
        .collect();
    MarketSmile::new_unchecked_coverage(100.0, t, 1.0, quotes).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flat_smiles_price_at_total_vol(vol in 0.05f64..0.6, t in 0.0f64..0.9, acc_vol in 0.05f64..0.6) {
        let smile = skewed(vol, 0.0, 0.0, t);
        let accrued = acc_vol * acc_vol * t;
        let realized = RealizedState::new(t, 1.0, accrued).unwrap();
        let p = price_seasoned(&smile, &realized, &AdjustConfig::default()).unwrap();
        let exact = (accrued + vol * vol * (1.0 - t)).sqrt();
        prop_assert!((p.price - exact).abs() < 1e-8, "{} {}", p.price, exact);
    }

    #[test]
    fn strip_reprices_adjusted_call_on_skewed_smiles(
        atm in 0.12f64..0.35,
        skew in -0.08f64..0.02,
        curv in 0.0f64..0.03,
        t in 0.0f64..0.8,
        acc_vol in 0.05f64..0.4,
    ) {
        let smile = skewed(atm, skew, curv, t);
        let realized = RealizedState::new(t, 1.0, acc_vol * acc_vol * t).unwrap();
        let cfg = AdjustConfig::default();
        let plan = hedge_plan(&smile, &realized, &cfg).unwrap();
        let direct = adjusted_call_price(&smile, &realized, plan.zv.strike, cfg.scheme).unwrap();
        prop_assert!((strip_value(&smile, &plan.strip) - direct).abs() < 1e-10);
        prop_assert!((plan.diagnostics.strip_weight_sum - 1.0).abs() < 1e-12);
        prop_assert!(plan.notional > 0.0);
        prop_assert!(plan.delta > 0.0 && plan.delta < 1.5);
    }
}

fn small_cfg(n_paths: usize, dates: usize) -> BacktestConfig {
    BacktestConfig {
        n_paths,
        rebalance_dates: uniform_dates(1.0, dates),
        inner_paths: 400,
        sigma_nodes: 10,
        bootstrap_resamples: 200,
        ..BacktestConfig::default()
    }
}

#[test]
fn deterministic_backtest_is_flat_for_variance_swaps() {
    let spec = SvModelSpec::sabr(0.0, 0.25, -0.4);
    let suite = run_backtests(&spec, &small_cfg(100, 50)).unwrap();
    for s in [Strategy::Unhedged, Strategy::Varswap1, Strategy::Varswap2] {
        let worst = suite
            .report(s)
            .per_path_pnl
            .iter()
            .fold(0.0f64, |a, x| a.max(x.abs()));
        assert!(worst < 1e-8, "{s:?} {worst:e}");
    }
    // the strip still carries discrete rebalancing noise
    assert!(suite.report(Strategy::Strip).std_pnl < 0.05);
}

#[test]
fn backtest_is_seed_deterministic_and_self_financing() {
    let spec = SvModelSpec::heston(2.0, 0.04, 0.5, 0.04, -0.7);
    let cfg = small_cfg(100, 20);
    let a = run_backtests(&spec, &cfg).unwrap();
    let b = run_backtests(&spec, &cfg).unwrap();
    assert_eq!(a, b);
    let d = &a.reports[0].diagnostics;
    assert!(d.accounting_residual < 1e-12, "{}", d.accounting_residual);
    assert_eq!(d.excluded_paths, 0);
    // unhedged P&L is minus the payoff around the inception price
    let unhedged = a.report(Strategy::Unhedged);
    let payoff_std = d.payoff_std_error * (cfg.n_paths as f64).sqrt();
    assert!((unhedged.std_pnl - payoff_std).abs() < 1e-3 * payoff_std);
    assert_eq!(unhedged.per_path_pnl.len(), cfg.n_paths);
    for r in &a.reports {
        assert!(r.variance_reduction > 0.0);
    }
}

#[test]
fn hedges_beat_unhedged_for_sabr_and_three_halves() {
    for spec in [
        SvModelSpec::sabr(0.8, 0.2, -0.5),
        SvModelSpec::three_halves(50.0, 0.04, 12.5, 0.04, -0.7),
    ] {
        let suite = run_backtests(&spec, &small_cfg(100, 25)).unwrap();
        let std = |s| suite.report(s).std_pnl;
        eprintln!(
            "{}: unhedged {:.4} strip {:.4} varswap1 {:.4} varswap2 {:.4}",
            spec.name(),
            std(Strategy::Unhedged),
            std(Strategy::Strip),
            std(Strategy::Varswap1),
            std(Strategy::Varswap2)
        );
        assert!(std(Strategy::Strip) < std(Strategy::Unhedged));
        assert!(std(Strategy::Varswap1) < std(Strategy::Unhedged));
        assert!(std(Strategy::Varswap2) < std(Strategy::Unhedged));
    }
}
