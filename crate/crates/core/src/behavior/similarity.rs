//! Output similarity.
//!
//! Similarity is `1 - lev(a, b) / max(|a|, |b|, 1)` over characters. The
//! full measure is only needed for calibration; equivalence checks just ask
//! "is similarity at least β?", which a banded edit-distance computation
//! answers in `O(max_len · band)` instead of `O(|a| · |b|)`.

/// Normalised character-level edit similarity in `[0, 1]`.
pub fn edit_similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let denom = a.len().max(b.len()).max(1);
    1.0 - levenshtein(&a, &b) as f64 / denom as f64
}

/// Whether `edit_similarity(a, b) >= beta`, decided without computing the
/// full distance matrix. Bit-exact with the full computation: the distance
/// cap is derived from the same floating-point expression.
pub fn similarity_meets(a: &str, b: &str, beta: f64) -> bool {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let denom = a.len().max(b.len()).max(1);
    // Largest distance whose similarity still clears beta.
    let mut cap: i64 = ((1.0 - beta) * denom as f64).floor() as i64;
    cap = cap.clamp(-1, denom as i64);
    while cap + 1 <= denom as i64 && 1.0 - (cap + 1) as f64 / denom as f64 >= beta {
        cap += 1;
    }
    while cap >= 0 && 1.0 - cap as f64 / (denom as f64) < beta {
        cap -= 1;
    }
    if cap < 0 {
        return false;
    }
    banded_within(&a, &b, cap as usize)
}

fn levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// True iff `lev(a, b) <= cap`, visiting only cells within the band
/// `|i - j| <= cap` (no cheaper path ever leaves it, and cells that exceed
/// the cap can be pruned because costs never decrease along a path).
fn banded_within(a: &[char], b: &[char], cap: usize) -> bool {
    if a.len().abs_diff(b.len()) > cap {
        return false;
    }
    if a.is_empty() || b.is_empty() {
        // Length gap already checked; the distance is the longer length.
        return true;
    }
    const INF: usize = usize::MAX / 2;
    let width = 2 * cap + 1;
    // Row windows are index-shifted: slot = j - i + cap.
    let mut prev = vec![INF; width];
    let mut cur = vec![INF; width];
    for j in 0..=cap.min(b.len()) {
        prev[j + cap] = j;
    }
    for i in 1..=a.len() {
        cur.fill(INF);
        let mut reachable = false;
        let j_lo = i.saturating_sub(cap);
        let j_hi = (i + cap).min(b.len());
        for j in j_lo..=j_hi {
            let idx = j + cap - i;
            let mut best = INF;
            if j == 0 {
                best = i;
            } else {
                let sub = prev[idx]; // (i-1, j-1)
                if sub < INF {
                    best = best.min(sub + usize::from(a[i - 1] != b[j - 1]));
                }
                if idx + 1 < width && prev[idx + 1] < INF {
                    best = best.min(prev[idx + 1] + 1); // (i-1, j): deletion
                }
                if idx >= 1 && cur[idx - 1] < INF {
                    best = best.min(cur[idx - 1] + 1); // (i, j-1): insertion
                }
            }
            if best <= cap {
                cur[idx] = best;
                reachable = true;
            }
        }
        if !reachable {
            return false;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len() + cap - a.len()] <= cap
}
