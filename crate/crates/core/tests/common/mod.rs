//! Independent oracle: exhaustive enumeration of every per-slot outcome
//! path, written straight from the protocol rules with no matrix machinery.
//! Exponential in the deadline, so only usable for small horizons, which is
//! exactly what makes it a trustworthy reference for the chain pipeline.

use fraglink::AbsorptionResult;

/// Closed loop: one fragment per slot, advance on success, drop the packet
/// at the first slot where the pending fragments exceed the remaining
/// slots.
pub fn enumerate_closed_loop(fragments: u32, deadline: u32, delivery: f64) -> AbsorptionResult {
    assert!(fragments >= 1 && fragments <= deadline);
    let mut acc = AbsorptionResult::ZERO;
    descend_closed(1, 0, 1.0, fragments, deadline, delivery, &mut acc);
    acc
}

fn descend_closed(
    slot: u32,
    done: u32,
    prob: f64,
    fragments: u32,
    deadline: u32,
    delivery: f64,
    acc: &mut AbsorptionResult,
) {
    let advanced = prob * delivery;
    if advanced > 0.0 {
        if done + 1 == fragments {
            acc.success += advanced;
            acc.success_delay += f64::from(slot) * advanced;
        } else if fragments - (done + 1) > deadline - slot {
            acc.timeout += advanced;
            acc.timeout_delay += f64::from(slot) * advanced;
        } else {
            descend_closed(slot + 1, done + 1, advanced, fragments, deadline, delivery, acc);
        }
    }
    let stalled = prob * (1.0 - delivery);
    if stalled > 0.0 {
        if fragments - done > deadline - slot {
            acc.timeout += stalled;
            acc.timeout_delay += f64::from(slot) * stalled;
        } else {
            descend_closed(slot + 1, done, stalled, fragments, deadline, delivery, acc);
        }
    }
}

/// Open loop: each fragment gets a fixed window of copies; a decoded
/// non-final fragment idles out its window, the final fragment succeeds the
/// moment it decodes, and an exhausted window drops the packet at its last
/// slot.
pub fn enumerate_open_loop(copies: &[u32], decode: f64) -> AbsorptionResult {
    assert!(!copies.is_empty() && copies.iter().all(|&c| c >= 1));
    let mut acc = AbsorptionResult::ZERO;
    descend_open(0, 0, 1.0, copies, decode, &mut acc);
    acc
}

fn descend_open(
    window: usize,
    start: u32,
    prob: f64,
    copies: &[u32],
    decode: f64,
    acc: &mut AbsorptionResult,
) {
    let width = copies[window];
    let last = window + 1 == copies.len();
    let mut undecoded = prob;
    for k in 1..=width {
        let hit = undecoded * decode; // first decode exactly at copy k
        undecoded *= 1.0 - decode;
        if hit > 0.0 {
            if last {
                let slot = f64::from(start + k);
                acc.success += hit;
                acc.success_delay += slot * hit;
            } else {
                descend_open(window + 1, start + width, hit, copies, decode, acc);
            }
        }
    }
    if undecoded > 0.0 {
        let slot = f64::from(start + width);
        acc.timeout += undecoded;
        acc.timeout_delay += slot * undecoded;
    }
}

/// Largest componentwise difference between two absorption results.
pub fn max_deviation(a: &AbsorptionResult, b: &AbsorptionResult) -> f64 {
    [
        (a.success - b.success).abs(),
        (a.timeout - b.timeout).abs(),
        (a.success_delay - b.success_delay).abs(),
        (a.timeout_delay - b.timeout_delay).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}
