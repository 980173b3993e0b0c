use chrono::NaiveDate;
use proptest::prelude::*;
use qfx_core::backtest::{
    compute_metrics, max_drawdown_pct, read_equity_csv, read_trades_csv, write_equity_csv,
    write_trades_csv, EquityPoint, TradeRecord,
};
use qfx_core::oracle::{brute_force_max_drawdown, discounted_returns};
use qfx_core::qa3c::n_step_returns;

fn points(values: &[f64]) -> Vec<EquityPoint> {
    let start = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap();
    values
        .iter()
        .enumerate()
        .map(|(i, &equity)| EquityPoint {
            date: start + chrono::Duration::days(i as i64),
            equity,
        })
        .collect()
}

proptest! {
    #[test]
    fn n_step_returns_match_closed_form(
        rewards in prop::collection::vec(-15.0f64..30.0, 1..=30),
        bootstrap in prop_oneof![Just(0.0), -200.0f64..200.0],
        gamma in 0.5f64..0.9999,
    ) {
        let values = vec![1.0; rewards.len()];
        let (ret, adv) = n_step_returns(&rewards, &values, gamma, bootstrap).unwrap();
        for (k, (a, b)) in ret.iter().zip(discounted_returns(&rewards, gamma, bootstrap)).enumerate() {
            prop_assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()), "t={k}: {a} vs {b}");
            prop_assert_eq!(adv[k], ret[k] - 1.0);
        }
    }

    #[test]
    fn drawdown_matches_pairwise_oracle(values in prop::collection::vec(1.0f64..1000.0, 1..60)) {
        let d = max_drawdown_pct(&values);
        prop_assert!((d - brute_force_max_drawdown(&values)).abs() < 1e-9);
        prop_assert!((0.0..100.0).contains(&d));
    }

    #[test]
    fn monotone_curve_has_zero_drawdown(mut values in prop::collection::vec(1.0f64..1000.0, 1..60)) {
        values.sort_by(f64::total_cmp);
        prop_assert_eq!(max_drawdown_pct(&values), 0.0);
    }

    #[test]
    fn exported_csvs_reproduce_metrics(
        equity in prop::collection::vec(50_000.0f64..150_000.0, 2..50),
        pnls in prop::collection::vec(-5.0f64..5.0, 0..20),
    ) {
        let curve = points(&equity);
        let day = |n: i64| NaiveDate::from_ymd_opt(2018, 1, 1).unwrap() + chrono::Duration::days(n);
        let trades: Vec<TradeRecord> = pnls
            .iter()
            .enumerate()
            .map(|(i, &p)| TradeRecord {
                entry_dates: (0..=(i % 3) as i64).map(|k| day(10 * i as i64 + k)).collect(),
                exit_date: day(10 * i as i64 + 5),
                avg_entry: 31.7,
                exit_price: 31.7 * (1.0 + p / 100.0),
                notional: 1000.0 * (1 + i % 3) as f64,
                pnl_pct: p,
                pnl_cash: 10.0 * p,
            })
            .collect();
        let m = compute_metrics(&trades, &curve).unwrap();
        let (mut tbuf, mut ebuf) = (Vec::new(), Vec::new());
        write_trades_csv(&mut tbuf, &trades).unwrap();
        write_equity_csv(&mut ebuf, &curve).unwrap();
        let again = compute_metrics(
            &read_trades_csv(tbuf.as_slice()).unwrap(),
            &read_equity_csv(ebuf.as_slice()).unwrap(),
        )
        .unwrap();
        prop_assert_eq!(again, m);
    }
}
