//! Per-receiver delivery dynamics as slot-indexed absorbing Markov chains.
//!
//! A packet of `n` fragments must be delivered within `T` slots. The chain
//! tracks, slot by slot, which fragment the link is working on, and absorbs
//! into either a success state (all fragments delivered) or a failure state
//! (deadline can no longer be met). Rather than one dense transition matrix,
//! the chain stores one block per slot: the transient block maps this slot's
//! states to the next slot's, and the absorbing block carries the success
//! and failure probabilities claimed at this slot. Absorption statistics are
//! computed by left vector-block products in [`crate::metrics`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::RepetitionPlan;
use crate::error::{Error, Result};

/// Tolerance for per-state outflow summing to one.
const ROW_SUM_TOL: f64 = 1e-12;

/// Rate-adaptation scheme: how the transmitter schedules fragment copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Closed loop: retransmit each fragment until its acknowledgment
    /// arrives, then move to the next.
    Clra,
    /// Open loop: a fixed repetition schedule fills the whole deadline.
    Olra,
    /// Open loop, energy saving: a uniform schedule that leaves the
    /// deadline's remainder slots idle.
    OlraEs,
}

impl Scheme {
    /// Closed-loop operation needs an acknowledgment channel.
    pub fn uses_feedback(&self) -> bool {
        matches!(self, Scheme::Clra)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Clra => "clra",
            Scheme::Olra => "olra",
            Scheme::OlraEs => "olra-es",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clra" => Ok(Scheme::Clra),
            "olra" => Ok(Scheme::Olra),
            "olra-es" => Ok(Scheme::OlraEs),
            other => Err(Error::config(format!(
                "unknown scheme `{other}` (expected clra, olra, or olra-es)"
            ))),
        }
    }
}

/// What the link is doing during one slot. Fragments are numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateLabel {
    /// Closed loop: attempting this fragment (all earlier ones delivered).
    Attempt { fragment: u32 },
    /// Open loop: receiving the k-th scheduled copy of a fragment that has
    /// not been decoded yet.
    Copy { fragment: u32, copy: u32 },
    /// Open loop: the fragment is already decoded; remaining copies of its
    /// window pass by while the receiver waits.
    Hold { fragment: u32 },
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateLabel::Attempt { fragment } => write!(f, "f{fragment}"),
            StateLabel::Copy { fragment, copy } => write!(f, "f{fragment}c{copy}"),
            StateLabel::Hold { fragment } => write!(f, "h{fragment}"),
        }
    }
}

/// One slot of the chain: its transient states, the transition block into
/// the next slot's states, and the absorption block.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    /// Slot index, starting at 1.
    pub slot: u32,
    /// Transient states alive in this slot.
    pub labels: Vec<StateLabel>,
    /// Transition probabilities: `q[row][col]` from this slot's state `row`
    /// to the next slot's state `col`. Empty rows in the final slot.
    pub q: Vec<Vec<f64>>,
    /// Absorption probabilities per state: `[success, failure]`.
    pub h: Vec<[f64; 2]>,
}

/// A complete slot-indexed absorbing chain for one receiver class.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbingChain {
    scheme: Scheme,
    fragments: u32,
    deadline: u32,
    levels: Vec<Level>,
}

impl AbsorbingChain {
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn fragments(&self) -> u32 {
        self.fragments
    }

    /// The delivery deadline in slots. Open-loop energy-saving schedules may
    /// finish before it; the chain then has fewer levels than the deadline.
    pub fn deadline(&self) -> u32 {
        self.deadline
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// Structural audit: consistent block dimensions, sequential slots,
    /// probabilities in range, and unit outflow from every state.
    pub fn check(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::chain("chain has no levels"));
        }
        if self.levels[0].labels.len() != 1 {
            return Err(Error::chain(format!(
                "first slot must have exactly one state, found {}",
                self.levels[0].labels.len()
            )));
        }
        for (idx, level) in self.levels.iter().enumerate() {
            if level.slot != idx as u32 + 1 {
                return Err(Error::chain(format!(
                    "slot numbering broken at index {idx}: found slot {}",
                    level.slot
                )));
            }
            let states = level.labels.len();
            if states == 0 {
                return Err(Error::chain(format!("slot {} has no states", level.slot)));
            }
            if level.q.len() != states || level.h.len() != states {
                return Err(Error::chain(format!(
                    "slot {}: block row counts disagree with {} states",
                    level.slot, states
                )));
            }
            let next_states = self
                .levels
                .get(idx + 1)
                .map(|next| next.labels.len())
                .unwrap_or(0);
            for (row, (q_row, h_row)) in level.q.iter().zip(&level.h).enumerate() {
                if q_row.len() != next_states {
                    return Err(Error::chain(format!(
                        "slot {} state {row}: transition row has {} entries, next slot has {} states",
                        level.slot,
                        q_row.len(),
                        next_states
                    )));
                }
                let mut sum = 0.0;
                for &v in q_row.iter().chain(h_row.iter()) {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::chain(format!(
                            "slot {} state {row}: probability {v} out of range",
                            level.slot
                        )));
                    }
                    sum += v;
                }
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::chain(format!(
                        "slot {} state {row}: outflow sums to {sum}, expected 1",
                        level.slot
                    )));
                }
            }
        }
        Ok(())
    }

    /// Plain-text rendering of every block, one line per state, for
    /// inspection and debugging.
    pub fn dump(&self) -> String {
        use std::fmt::Write;

        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} chain: {} fragments, deadline {} slots, {} levels",
            self.scheme,
            self.fragments,
            self.deadline,
            self.levels.len()
        );
        for (idx, level) in self.levels.iter().enumerate() {
            let _ = writeln!(out, "slot {}:", level.slot);
            let next_labels: &[StateLabel] = self
                .levels
                .get(idx + 1)
                .map(|next| next.labels.as_slice())
                .unwrap_or(&[]);
            for (row, label) in level.labels.iter().enumerate() {
                let mut parts: Vec<String> = level.q[row]
                    .iter()
                    .zip(next_labels)
                    .filter(|(v, _)| **v != 0.0)
                    .map(|(v, l)| format!("{l}:{v:.6}"))
                    .collect();
                if level.h[row][0] != 0.0 {
                    parts.push(format!("S:{:.6}", level.h[row][0]));
                }
                if level.h[row][1] != 0.0 {
                    parts.push(format!("F:{:.6}", level.h[row][1]));
                }
                let _ = writeln!(out, "  {label:<8} -> {}", parts.join(", "));
            }
        }
        out
    }
}

fn check_probability(p: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config(format!(
            "{what} must lie in [0, 1], got {p}"
        )));
    }
    Ok(())
}

/// Builds the closed-loop chain: the transmitter repeats the current
/// fragment until it is delivered (decoded and acknowledged, jointly with
/// probability `delivery_prob`), then moves on. A packet is dropped the
/// moment the remaining slots cannot fit the pending fragments.
pub fn build_clra(fragments: u32, deadline: u32, delivery_prob: f64) -> Result<AbsorbingChain> {
    check_probability(delivery_prob, "delivery probability")?;
    if fragments == 0 {
        return Err(Error::config("fragment count must be at least 1"));
    }
    if fragments > deadline {
        return Err(Error::config(format!(
            "{fragments} fragments cannot fit in a {deadline}-slot deadline"
        )));
    }
    let n = i64::from(fragments);
    let horizon = i64::from(deadline);
    let rho = delivery_prob;
    let rho_bar = 1.0 - rho;
    // In slot t the link can be on fragment i only if earlier slots could
    // have delivered i-1 fragments (i <= t) and the remaining slots can
    // still fit the rest (T - t >= n - i).
    let lo = |t: i64| (n - (horizon - t)).max(1);
    let hi = |t: i64| t.min(n);

    let mut levels = Vec::with_capacity(deadline as usize);
    for t in 1..=horizon {
        let labels: Vec<StateLabel> = (lo(t)..=hi(t))
            .map(|i| StateLabel::Attempt { fragment: i as u32 })
            .collect();
        let next_states = if t < horizon {
            (hi(t + 1) - lo(t + 1) + 1) as usize
        } else {
            0
        };
        let mut q = vec![vec![0.0; next_states]; labels.len()];
        let mut h = vec![[0.0; 2]; labels.len()];
        for (row, i) in (lo(t)..=hi(t)).enumerate() {
            if i == n {
                h[row][0] += rho; // last fragment delivered: packet success
            } else {
                q[row][(i + 1 - lo(t + 1)) as usize] += rho;
            }
            if t < horizon && i >= lo(t + 1) {
                q[row][(i - lo(t + 1)) as usize] += rho_bar; // retry next slot
            } else {
                h[row][1] += rho_bar; // pending fragments exceed remaining slots
            }
        }
        levels.push(Level { slot: t as u32, labels, q, h });
    }
    let chain = AbsorbingChain { scheme: Scheme::Clra, fragments, deadline, levels };
    chain.check()?;
    Ok(chain)
}

/// Builds the open-loop chain for the deadline-filling schedule
/// (or any explicitly supplied schedule).
pub fn build_olra(
    fragments: u32,
    deadline: u32,
    decode_prob: f64,
    plan: &RepetitionPlan,
) -> Result<AbsorbingChain> {
    build_open_loop(Scheme::Olra, fragments, deadline, decode_prob, plan)
}

/// Builds the open-loop chain for the uniform energy-saving schedule, which
/// leaves `deadline mod fragments` slots unused.
pub fn build_olra_es(fragments: u32, deadline: u32, decode_prob: f64) -> Result<AbsorbingChain> {
    let plan = RepetitionPlan::energy_saving(fragments, deadline)?;
    build_open_loop(Scheme::OlraEs, fragments, deadline, decode_prob, &plan)
}

fn build_open_loop(
    scheme: Scheme,
    fragments: u32,
    deadline: u32,
    decode_prob: f64,
    plan: &RepetitionPlan,
) -> Result<AbsorbingChain> {
    check_probability(decode_prob, "decode probability")?;
    if plan.fragments() != fragments {
        return Err(Error::config(format!(
            "repetition plan covers {} fragments, expected {fragments}",
            plan.fragments()
        )));
    }
    if plan.total_slots() > deadline {
        return Err(Error::config(format!(
            "repetition plan needs {} slots but the deadline is {deadline}",
            plan.total_slots()
        )));
    }
    let p = decode_prob;
    let p_bar = 1.0 - p;
    let copies = plan.copies();
    let n = copies.len();

    // One level per scheduled slot: fragment window i contributes levels for
    // copies 1..=copies[i]. The receiver may already hold the fragment from
    // an earlier copy, except at a window's first copy, and never for the
    // last fragment (decoding it ends the packet immediately).
    let mut slots: Vec<(usize, u32)> = Vec::with_capacity(plan.total_slots() as usize);
    for (i, &eps) in copies.iter().enumerate() {
        for k in 1..=eps {
            slots.push((i, k));
        }
    }
    let label_sets: Vec<Vec<StateLabel>> = slots
        .iter()
        .map(|&(i, k)| {
            let fragment = i as u32 + 1;
            if k == 1 || i == n - 1 {
                vec![StateLabel::Copy { fragment, copy: k }]
            } else {
                vec![
                    StateLabel::Copy { fragment, copy: k },
                    StateLabel::Hold { fragment },
                ]
            }
        })
        .collect();

    let mut levels = Vec::with_capacity(slots.len());
    for (idx, &(i, k)) in slots.iter().enumerate() {
        let labels = label_sets[idx].clone();
        let empty: Vec<StateLabel> = Vec::new();
        let next_labels: &[StateLabel] = label_sets.get(idx + 1).map_or(&empty, |v| v.as_slice());
        let fragment = i as u32 + 1;
        let eps = copies[i];
        let last_copy = k == eps;
        let mut q = vec![vec![0.0; next_labels.len()]; labels.len()];
        let mut h = vec![[0.0; 2]; labels.len()];

        let col_of = |target: StateLabel| -> Result<usize> {
            next_labels
                .iter()
                .position(|l| *l == target)
                .ok_or_else(|| {
                    Error::chain(format!(
                        "slot {}: missing successor state {target}",
                        idx + 1
                    ))
                })
        };

        for (row, label) in labels.iter().enumerate() {
            match *label {
                StateLabel::Copy { .. } => {
                    if i == n - 1 {
                        // decoding the last fragment completes the packet
                        h[row][0] += p;
                        if last_copy {
                            h[row][1] += p_bar;
                        } else {
                            q[row][col_of(StateLabel::Copy { fragment, copy: k + 1 })?] += p_bar;
                        }
                    } else if last_copy {
                        // window over: decoded now or never
                        q[row][col_of(StateLabel::Copy { fragment: fragment + 1, copy: 1 })?] += p;
                        h[row][1] += p_bar;
                    } else {
                        q[row][col_of(StateLabel::Hold { fragment })?] += p;
                        q[row][col_of(StateLabel::Copy { fragment, copy: k + 1 })?] += p_bar;
                    }
                }
                StateLabel::Hold { .. } => {
                    // already decoded: wait out this window deterministically
                    let target = if last_copy {
                        StateLabel::Copy { fragment: fragment + 1, copy: 1 }
                    } else {
                        StateLabel::Hold { fragment }
                    };
                    q[row][col_of(target)?] += 1.0;
                }
                StateLabel::Attempt { .. } => {
                    return Err(Error::chain("closed-loop state in an open-loop chain"));
                }
            }
        }
        levels.push(Level { slot: idx as u32 + 1, labels, q, h });
    }
    let chain = AbsorbingChain { scheme, fragments, deadline, levels };
    chain.check()?;
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;

    const RHO: f64 = 0.37;

    #[test]
    fn closed_loop_level_shapes_grow_hold_and_shrink() {
        let chain = build_clra(3, 8, RHO).unwrap();
        let sizes: Vec<usize> = chain.levels().iter().map(|l| l.labels.len()).collect();
        assert_eq!(sizes, [1, 2, 3, 3, 3, 3, 2, 1]);
        // slot 7 holds fragments 2 and 3: a packet still on fragment 1 there
        // was already dropped
        let labels: Vec<String> = chain.levels()[6].labels.iter().map(|l| l.to_string()).collect();
        assert_eq!(labels, ["f2", "f3"]);
    }

    #[test]
    fn closed_loop_absorbs_success_from_last_fragment_only() {
        let chain = build_clra(3, 8, RHO).unwrap();
        for level in chain.levels() {
            for (label, h) in level.labels.iter().zip(&level.h) {
                let StateLabel::Attempt { fragment } = label else {
                    panic!("unexpected open-loop state")
                };
                if *fragment == 3 {
                    assert_eq!(h[0], RHO);
                } else {
                    assert_eq!(h[0], 0.0);
                }
            }
        }
    }

    #[test]
    fn closed_loop_drops_packet_when_slots_run_out() {
        let chain = build_clra(3, 8, RHO).unwrap();
        // slot 6, fragment 1: failing leaves 3 pending fragments and only 2
        // slots, so failure absorbs here
        let level = &chain.levels()[5];
        assert_eq!(level.labels[0], StateLabel::Attempt { fragment: 1 });
        assert_eq!(level.h[0], [0.0, 1.0 - RHO]);
        assert_eq!(level.q[0], vec![RHO, 0.0]);
        // fragment 2 can still fail once more
        assert_eq!(level.h[1], [0.0, 0.0]);
        assert_eq!(level.q[1], vec![1.0 - RHO, RHO]);
        // final slot: everything absorbs
        let last = chain.levels().last().unwrap();
        assert_eq!(last.h[0], [RHO, 1.0 - RHO]);
        assert!(last.q[0].is_empty());
    }

    #[test]
    fn open_loop_level_shapes_match_schedule() {
        let plan = RepetitionPlan::new(vec![4, 3, 4]).unwrap();
        let chain = build_olra(3, 11, RHO, &plan).unwrap();
        let sizes: Vec<usize> = chain.levels().iter().map(|l| l.labels.len()).collect();
        assert_eq!(sizes, [1, 2, 2, 2, 1, 2, 2, 1, 1, 1, 1]);
        let labels: Vec<String> = chain.levels()[3].labels.iter().map(|l| l.to_string()).collect();
        assert_eq!(labels, ["f1c4", "h1"]);
    }

    #[test]
    fn open_loop_window_boundary_blocks() {
        let plan = RepetitionPlan::new(vec![4, 3, 4]).unwrap();
        let p = RHO;
        let chain = build_olra(3, 11, p, &plan).unwrap();
        // end of fragment 1's window (slot 4): pending copy forwards on
        // success and times out on failure, hold state forwards surely
        let level = &chain.levels()[3];
        assert_eq!(level.q[0], vec![p]);
        assert_eq!(level.h[0], [0.0, 1.0 - p]);
        assert_eq!(level.q[1], vec![1.0]);
        assert_eq!(level.h[1], [0.0, 0.0]);
        // mid-window (slot 2): failure retries, success parks in hold
        let level = &chain.levels()[1];
        assert_eq!(level.q[0], vec![1.0 - p, p]);
        assert_eq!(level.q[1], vec![0.0, 1.0]);
        // last fragment (slots 8..11): success absorbs at every copy
        for idx in 7..10 {
            let level = &chain.levels()[idx];
            assert_eq!(level.h[0], [p, 0.0]);
            assert_eq!(level.q[0], vec![1.0 - p]);
        }
        let last = chain.levels().last().unwrap();
        assert_eq!(last.h[0], [p, 1.0 - p]);
    }

    #[test]
    fn energy_saving_truncates_the_schedule() {
        let chain = build_olra_es(4, 15, RHO).unwrap();
        assert_eq!(chain.levels().len(), 12); // 3 copies each, 3 idle slots
        assert_eq!(chain.deadline(), 15);

        // when the deadline divides evenly the two open-loop variants agree
        let standard = RepetitionPlan::standard(5, 15).unwrap();
        let full = build_olra(5, 15, RHO, &standard).unwrap();
        let saving = build_olra_es(5, 15, RHO).unwrap();
        assert_eq!(full.levels(), saving.levels());
    }

    #[test]
    fn chains_pass_structural_audit_across_parameters() {
        for &p in &[0.0, 0.25, 0.5, 0.75, 1.0] {
            for t in 1..=10u32 {
                for n in 1..=t {
                    build_clra(n, t, p).unwrap();
                    let plan = RepetitionPlan::standard(n, t).unwrap();
                    build_olra(n, t, p, &plan).unwrap();
                    build_olra_es(n, t, p).unwrap();
                }
            }
        }
    }

    #[test]
    fn builders_reject_invalid_parameters() {
        assert!(build_clra(0, 5, 0.5).is_err());
        assert!(build_clra(6, 5, 0.5).is_err());
        assert!(build_clra(2, 5, 1.5).is_err());
        let plan = RepetitionPlan::new(vec![3, 3]).unwrap();
        assert!(build_olra(3, 10, 0.5, &plan).is_err()); // fragment mismatch
        assert!(build_olra(2, 5, 0.5, &plan).is_err()); // 6 slots > deadline 5
    }

    #[test]
    fn scheme_labels_round_trip() {
        for scheme in [Scheme::Clra, Scheme::Olra, Scheme::OlraEs] {
            assert_eq!(scheme.label().parse::<Scheme>().unwrap(), scheme);
        }
        assert!("aloha".parse::<Scheme>().is_err());
        assert!(Scheme::Clra.uses_feedback());
        assert!(!Scheme::Olra.uses_feedback());
        assert!(!Scheme::OlraEs.uses_feedback());
    }
}
