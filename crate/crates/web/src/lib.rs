//! Browser bindings for the demo page. Every export takes plain numbers or
//! JSON text and returns JSON text; failures come back as `{"error": "..."}`.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use cmdp_core::environments::{
    assemble_game, build_queue, build_static_example, shift_rewards, QueueParams, StaticExample,
};
use cmdp_core::learner::{run_discounted, LearnerConfig};
use cmdp_core::matrix_game::{maximin_row, solve_maximin, Matrix};
use cmdp_core::oracle::{cmdp_lp_discounted, fixed_point_discounted, DEFAULT_SWEEP_BUDGET};

#[derive(Serialize)]
struct GameOut {
    value: f64,
    row_strategy: Vec<f64>,
    column_strategy: Vec<f64>,
    tight_columns: Vec<usize>,
}

#[derive(Serialize)]
struct CurveOut {
    steps: Vec<u64>,
    /// `q[i]` is the row-major `Q(s0, ·, ·)` at `steps[i]`.
    q: Vec<Vec<f64>>,
    policy: Vec<Vec<f64>>,
    actions: usize,
    opponents: usize,
}

#[derive(Serialize)]
struct SweepPoint {
    delta: f64,
    lp_feasible: bool,
    game_value: f64,
}

fn respond<T: Serialize>(result: Result<T, String>) -> String {
    match result {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e),
    }
}

fn error_json(message: &str) -> String {
    serde_json::json!({ "error": message }).to_string()
}

/// Solves the zero-sum matrix game given as a JSON array of rows; the row player maximizes.
#[wasm_bindgen]
pub fn solve_game(rows_json: &str) -> String {
    respond((|| {
        let rows: Vec<Vec<f64>> = serde_json::from_str(rows_json).map_err(|e| format!("bad matrix: {e}"))?;
        let m = Matrix::from_rows(&rows).map_err(|e| e.to_string())?;
        let s = solve_maximin(&m).map_err(|e| e.to_string())?;
        Ok(GameOut {
            value: s.value,
            row_strategy: s.row_strategy,
            column_strategy: s.dual_strategy,
            tight_columns: s.tight_columns,
        })
    })())
}

/// Runs the discounted learner on example 1 or 2 and returns Q and policy every `every` steps.
#[wasm_bindgen]
pub fn learn_example(example: u32, steps: u32, seed: u32, every: u32) -> String {
    respond((|| {
        let which = match example {
            1 => StaticExample::Example1,
            2 => StaticExample::Example2,
            other => return Err(format!("no example {other}")),
        };
        if steps == 0 || steps > 200_000 {
            return Err("steps must be in 1..=200000".into());
        }
        let game = assemble_game(&build_static_example(which)).map_err(|e| e.to_string())?;
        let mut cfg = LearnerConfig::new(steps as u64, seed as u64);
        cfg.snapshot_every = every.max(1) as u64;
        cfg.record_steps = false;
        let trace = run_discounted(&game, &cfg).map_err(|e| e.to_string())?;
        let d = game.dims();
        let s0 = game.initial_state();
        Ok(CurveOut {
            steps: trace.snapshots.iter().map(|s| s.step).collect(),
            q: trace.snapshots.iter().map(|s| s.q.state_slice(s0).to_vec()).collect(),
            policy: trace.snapshots.iter().map(|s| s.policy.row(s0).to_vec()).collect(),
            actions: d.actions,
            opponents: d.opponents,
        })
    })())
}

/// For `n` thresholds evenly spaced on `[lo, hi]`: the occupancy LP verdict and
/// the game value at the initial state of the shifted queue model.
#[wasm_bindgen]
pub fn queue_sweep(lo: f64, hi: f64, n: u32) -> String {
    respond((|| {
        if !(lo < hi) || !(2..=200).contains(&n) {
            return Err("need lo < hi and 2 <= n <= 200".into());
        }
        let queue = build_queue(&QueueParams::default()).map_err(|e| e.to_string())?;
        (0..n)
            .map(|i| {
                let delta = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                let shifted = shift_rewards(&queue, delta).map_err(|e| e.to_string())?;
                let lp_feasible = cmdp_lp_discounted(&shifted, false).map_err(|e| e.to_string())?.feasible;
                let game = assemble_game(&shifted).map_err(|e| e.to_string())?;
                let sol = fixed_point_discounted(&game, 1e-9, DEFAULT_SWEEP_BUDGET).map_err(|e| e.to_string())?;
                let game_value =
                    maximin_row(&sol.q.state_matrix(game.initial_state())).map_err(|e| e.to_string())?.value;
                Ok(SweepPoint { delta, lp_feasible, game_value })
            })
            .collect::<Result<Vec<_>, String>>()
    })())
}
