//! Reciprocal backing as a game.
//!
//! Two backers each hold `c`. "Invest" sends half to the other's project and keeps
//! half on one's own; "do not invest" keeps everything at home. Under uncapped QF
//! this is a prisoners' dilemma, but with trigger strategies cooperation survives
//! in the repeated game for patient enough players. For rings of `n` backers the
//! thresholds `α*` (uncapped) and `α**` (pool-constrained, ratio `k`) give the
//! smallest cooperating fraction that still makes the ring profitable.

use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funding::{matching_requirement, ProjectLedger};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Invest,
    NotInvest,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Invest, Action::NotInvest];

    fn index(self) -> usize {
        match self {
            Action::Invest => 0,
            Action::NotInvest => 1,
        }
    }
}

/// Net payoffs `(row, column)` indexed by `[row action][column action]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    pub c: f64,
    pub entries: [[(f64, f64); 2]; 2],
}

fn defection_multiplier() -> f64 {
    (1.0 + 2.0 * 2f64.sqrt()) / 2.0
}

pub fn payoff_matrix(c: f64) -> Result<PayoffMatrix> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::domain(format!("budget must be positive, got {c}")));
    }
    let temptation = c * defection_multiplier();
    let sucker = -c / 2.0;
    Ok(PayoffMatrix {
        c,
        entries: [[(c, c), (sucker, temptation)], [(temptation, sucker), (0.0, 0.0)]],
    })
}

impl PayoffMatrix {
    pub fn payoff(&self, row: Action, col: Action) -> (f64, f64) {
        self.entries[row.index()][col.index()]
    }

    /// Row player's best responses to a column action.
    pub fn row_best_responses(&self, col: Action) -> Vec<Action> {
        let best = Action::ALL
            .iter()
            .map(|&a| self.payoff(a, col).0)
            .fold(f64::NEG_INFINITY, f64::max);
        Action::ALL
            .into_iter()
            .filter(|&a| self.payoff(a, col).0 == best)
            .collect()
    }

    pub fn col_best_responses(&self, row: Action) -> Vec<Action> {
        let best = Action::ALL
            .iter()
            .map(|&a| self.payoff(row, a).1)
            .fold(f64::NEG_INFINITY, f64::max);
        Action::ALL
            .into_iter()
            .filter(|&a| self.payoff(row, a).1 == best)
            .collect()
    }

    /// Pure-strategy Nash equilibria by enumeration.
    pub fn pure_nash(&self) -> Vec<(Action, Action)> {
        let mut out = Vec::new();
        for row in Action::ALL {
            for col in Action::ALL {
                if self.row_best_responses(col).contains(&row)
                    && self.col_best_responses(row).contains(&col)
                {
                    out.push((row, col));
                }
            }
        }
        out
    }
}

/// Largest discount rate at which grim-trigger cooperation is sustainable: 2/(2√2 − 1).
pub fn trigger_threshold() -> f64 {
    2.0 / (2.0 * 2f64.sqrt() - 1.0)
}

/// Whether cooperating forever (`c + c/r`) is worth at least a one-off defection.
pub fn trigger_sustainable(discount_rate: f64) -> bool {
    discount_rate <= trigger_threshold()
}

/// Present value of a constant per-round payoff from round 0 on: `x + x/r`.
pub fn present_value_forever(payoff: f64, discount_rate: f64) -> f64 {
    payoff + payoff / discount_rate
}

fn check_ring(n: u32) -> Result<()> {
    if n < 2 {
        return Err(Error::domain(format!("ring size must be at least 2, got {n}")));
    }
    Ok(())
}

/// α* = 1/√n, the cooperating fraction above which an uncapped ring pays off.
pub fn alpha_star(n: u32) -> Result<f64> {
    check_ring(n)?;
    Ok(1.0 / (n as f64).sqrt())
}

/// Positive root of `(n/k) α² + (1 − 1/k) α − 1 = 0`: the cooperating fraction at
/// which a ring breaks even under scaled matching. Equals α* at k = 1 and tends to 1
/// as k grows.
pub fn alpha_double_star(n: u32, k: f64) -> Result<f64> {
    check_ring(n)?;
    if !(k >= 1.0) || !k.is_finite() {
        return Err(Error::domain(format!("k must be at least 1, got {k}")));
    }
    let b = 1.0 - 1.0 / k;
    let disc = b * b + 4.0 * n as f64 / k;
    // rationalized form of (−b + √disc) / (2n/k); no cancellation for large k
    Ok(2.0 / (b + disc.sqrt()))
}

/// Net return `F − c` to a ring member when a fraction `alpha` of the `n` members each
/// put `c/n` into its project.
pub fn ring_payoff(n: u32, alpha: f64, k: f64, c: f64) -> Result<f64> {
    check_ring(n)?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::domain(format!("k must be positive, got {k}")));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::domain(format!("budget must be positive, got {c}")));
    }
    let n = n as f64;
    let funds = c * ((alpha * alpha * n - alpha) / k + alpha);
    Ok(funds - c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollusionThresholds {
    pub n: u32,
    pub k: f64,
    pub alpha_star: f64,
    pub alpha_double_star: f64,
}

pub fn thresholds(n: u32, k: f64) -> Result<CollusionThresholds> {
    Ok(CollusionThresholds {
        n,
        k,
        alpha_star: alpha_star(n)?,
        alpha_double_star: alpha_double_star(n, k)?,
    })
}

pub fn threshold_sweep(ring_sizes: &[u32], ks: &[f64]) -> Result<Vec<CollusionThresholds>> {
    let mut out = Vec::with_capacity(ring_sizes.len() * ks.len());
    for &n in ring_sizes {
        for &k in ks {
            out.push(thresholds(n, k)?);
        }
    }
    Ok(out)
}

/// Columns: `n,k,alpha_star,alpha_double_star`.
pub fn write_thresholds_csv<W: Write>(writer: W, rows: &[CollusionThresholds]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<thresholds>", e))?;
    Ok(())
}

/// How a ring member plays the repeated game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Policy {
    AlwaysInvest,
    NeverInvest,
    /// Invest in a partner until that partner once fails to invest back.
    Trigger,
    /// Trigger play, but stop investing in anyone from the given round on.
    DeviateAt(u32),
    /// Invest in each partner independently with this probability.
    Random(f64),
}

impl FromStr for Policy {
    type Err = Error;

    /// `always`, `never`, `trigger`, `deviate@T`, `random:P`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::domain(format!("invalid policy `{s}`"));
        if let Some(t) = s.strip_prefix("deviate@") {
            return t.parse().map(Policy::DeviateAt).map_err(|_| bad());
        }
        if let Some(p) = s.strip_prefix("random:") {
            let p: f64 = p.parse().map_err(|_| bad())?;
            if !(0.0..=1.0).contains(&p) {
                return Err(bad());
            }
            return Ok(Policy::Random(p));
        }
        match s {
            "always" => Ok(Policy::AlwaysInvest),
            "never" => Ok(Policy::NeverInvest),
            "trigger" => Ok(Policy::Trigger),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Horizon {
    Rounds(u32),
    /// After each round play continues with `probability`, up to `max_rounds`.
    Continuation { probability: f64, max_rounds: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatedGame {
    /// Per-member budget each round.
    pub c: f64,
    pub k: f64,
    pub discount_rate: f64,
    pub horizon: Horizon,
    /// One policy per ring member; the ring size is `policies.len()`.
    pub policies: Vec<Policy>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    /// `invests[i][j]`: member i put c/n into member j's project.
    pub invests: Vec<Vec<bool>>,
    /// Member invested in every other member this round.
    pub cooperated: Vec<bool>,
    pub payoffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub rounds: Vec<RoundRecord>,
    pub present_values: Vec<f64>,
}

/// Net payoff of each ring member for one round of reciprocal investments.
pub fn ring_round_payoffs(invests: &[Vec<bool>], c: f64, k: f64) -> Result<Vec<f64>> {
    let n = invests.len();
    let slice = c / n as f64;
    let mut payoffs = Vec::with_capacity(n);
    for j in 0..n {
        let sent = invests[j].iter().enumerate().filter(|&(t, &b)| b && t != j).count();
        let mut amounts = vec![c - slice * sent as f64];
        for (i, row) in invests.iter().enumerate() {
            if i != j && row[j] {
                amounts.push(slice);
            }
        }
        let ledger = ProjectLedger::from_amounts(format!("ring-{j}"), &amounts)?;
        let funds = ledger.total() + matching_requirement(&ledger) / k;
        payoffs.push(funds - c);
    }
    Ok(payoffs)
}

/// Plays the ring game round by round and discounts each member's payoff stream.
pub fn repeated_game_simulate(game: &RepeatedGame) -> Result<Trajectory> {
    let n = game.policies.len();
    if n < 2 {
        return Err(Error::domain("repeated game needs at least two players"));
    }
    if !(game.c > 0.0) || !(game.k > 0.0) || !(game.discount_rate > 0.0) {
        return Err(Error::domain("c, k and the discount rate must be positive"));
    }
    let (max_rounds, continuation) = match game.horizon {
        Horizon::Rounds(t) => (t, None),
        Horizon::Continuation {
            probability,
            max_rounds,
        } => {
            if !(0.0..=1.0).contains(&probability) {
                return Err(Error::domain("continuation probability must lie in [0, 1]"));
            }
            (max_rounds, Some(probability))
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(game.seed);
    // grudge[i][j]: j once failed to invest in i.
    let mut grudge = vec![vec![false; n]; n];
    let mut rounds = Vec::new();
    let mut pv = vec![0.0; n];

    for t in 0..max_rounds {
        let mut invests = vec![vec![false; n]; n];
        for (i, policy) in game.policies.iter().enumerate() {
            for j in (0..n).filter(|&j| j != i) {
                invests[i][j] = match *policy {
                    Policy::AlwaysInvest => true,
                    Policy::NeverInvest => false,
                    Policy::Trigger => !grudge[i][j],
                    Policy::DeviateAt(d) => t < d && !grudge[i][j],
                    Policy::Random(p) => rng.gen_bool(p),
                };
            }
        }
        let payoffs = ring_round_payoffs(&invests, game.c, game.k)?;
        let factor = (1.0 + game.discount_rate).powi(t as i32);
        for (acc, p) in pv.iter_mut().zip(&payoffs) {
            *acc += p / factor;
        }
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                if !invests[j][i] {
                    grudge[i][j] = true;
                }
            }
        }
        let cooperated = (0..n)
            .map(|i| (0..n).filter(|&j| j != i).all(|j| invests[i][j]))
            .collect();
        rounds.push(RoundRecord {
            round: t,
            invests,
            cooperated,
            payoffs,
        });
        if let Some(q) = continuation {
            if !rng.gen_bool(q) {
                break;
            }
        }
    }

    Ok(Trajectory {
        rounds,
        present_values: pv,
    })
}
