use std::fmt::Write as _;

use serde_json::{json, Map, Value};

use crate::equilibrium::{Agreeability, ParetoCheck, PepaResult};
use crate::risk::InfConvolution;
use crate::stability::SweepReport;

/// Rounds to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

/// Rounds every float in a JSON tree; integers are left alone.
pub fn rounded(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round12(n.as_f64().expect("f64 number"));
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(rounded).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, rounded(v))).collect()),
        other => other,
    }
}

/// Pretty, rounded JSON with a trailing newline.
pub fn render(v: Value) -> String {
    let mut s = serde_json::to_string_pretty(&rounded(v)).expect("json renders");
    s.push('\n');
    s
}

pub fn pepa_json(r: &PepaResult, agent_names: &[String], claim_names: &[String]) -> Value {
    let price: Map<String, Value> = claim_names
        .iter()
        .zip(r.price.iter())
        .map(|(n, p)| (n.clone(), json!(p)))
        .collect();
    let allocation: Vec<Value> = agent_names
        .iter()
        .zip(&r.allocation.weights)
        .map(|(n, a)| json!({ "agent": n, "holdings": a }))
        .collect();
    json!({
        "price": r.price.0,
        "price_by_claim": price,
        "allocation": allocation,
        "optimizer_measures": r.optimizer_measures,
        "clearing_residual": r.clearing_residual,
        "foc_residual": r.foc_residual,
        "aggregate_value": r.aggregate_value,
        "iterations": r.iterations,
    })
}

pub fn pareto_json(p: &ParetoCheck) -> Value {
    json!({
        "pareto_optimal": p.is_pareto,
        "common_measure": p.common_measure,
        "max_l1_gap": p.max_gap,
        "measures": p.measures,
    })
}

pub fn agree_json(a: &Agreeability) -> Value {
    match a {
        Agreeability::Agreeable { price, value } => json!({
            "agreeable": true,
            "minimax_value": value,
            "price_witness": price,
        }),
        Agreeability::Refused { lambda, value } => json!({
            "agreeable": false,
            "minimax_value": value,
            "certificate": { "lambda": lambda, "weighted_requirement": value },
        }),
    }
}

pub fn infconv_json(ic: &InfConvolution, agent_names: &[String]) -> Value {
    let split: Vec<Value> = agent_names
        .iter()
        .zip(&ic.split)
        .map(|(n, c)| json!({ "agent": n, "part": c.0 }))
        .collect();
    json!({
        "value": ic.value,
        "split": split,
        "measure": ic.measure,
        "residual": ic.residual,
        "iterations": ic.iterations,
    })
}

pub fn sweep_json(r: &SweepReport, out: Option<&str>) -> Value {
    let last = r.last();
    json!({
        "family": r.family,
        "rows": r.rows.len(),
        "limit_price": r.limit.price.0,
        "limit_allocation": r.limit.allocation.weights,
        "final_price_gap": last.map(|l| l.price_gap),
        "final_alloc_gap": last.map(|l| l.alloc_gap),
        "final_r_gap": last.map(|l| l.r_gap),
        "extrapolated_price": r.extrapolated_price,
        "extrapolation_gap": r.extrapolation_gap(),
        "tails_decrease_from_5": r.tails_decrease(5, 1e-8),
        "min_normalized_margin": r.min_normalized_margin,
        "csv": out,
    })
}

fn num(x: f64) -> String {
    format!("{:?}", round12(x))
}

/// Columns: `m`, price per claim, holdings per agent and claim, then the gaps.
pub fn sweep_csv(r: &SweepReport, agent_names: &[String], claim_names: &[String]) -> String {
    let mut s = String::from("m");
    for c in claim_names {
        let _ = write!(s, ",p_hat_{c}");
    }
    for a in agent_names {
        for c in claim_names {
            let _ = write!(s, ",a_hat_{a}_{c}");
        }
    }
    s.push_str(",price_gap,alloc_gap,r_gap,value_gap\n");
    for row in &r.rows {
        let _ = write!(s, "{}", row.m);
        for v in row.price.iter().chain(&row.allocation) {
            let _ = write!(s, ",{}", num(*v));
        }
        let _ = writeln!(
            s,
            ",{},{},{},{}",
            num(row.price_gap),
            num(row.alloc_gap),
            num(row.r_gap),
            num(row.value_gap)
        );
    }
    s
}

/// One demand-sweep row: prices, demands, first-order residual.
pub struct DemandRow {
    pub price: Vec<f64>,
    pub demand: Vec<f64>,
    pub residual: f64,
}

pub fn demand_csv(rows: &[DemandRow], claim_names: &[String]) -> String {
    let mut s = String::new();
    let header: Vec<String> = claim_names
        .iter()
        .map(|c| format!("p_{c}"))
        .chain(claim_names.iter().map(|c| format!("z_{c}")))
        .chain(std::iter::once("residual".to_string()))
        .collect();
    s.push_str(&header.join(","));
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r
            .price
            .iter()
            .chain(&r.demand)
            .chain(std::iter::once(&r.residual))
            .map(|v| num(*v))
            .collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(round12(0.5), 0.5);
        assert_eq!(round12(1.0 / 3.0), 0.333333333333);
        assert_eq!(round12(-2.0 / 3.0 * 1e-7), -6.66666666667e-8);
        assert_eq!(render(json!({"a": 1.0 / 3.0, "n": 3})), "{\n  \"a\": 0.333333333333,\n  \"n\": 3\n}\n");
    }
}
