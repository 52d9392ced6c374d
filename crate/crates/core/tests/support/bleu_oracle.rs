//! Straightforward corpus BLEU-4 over pre-split tokens, written without
//! hashing or windows so it can cross-check the library.

#![allow(dead_code)]

pub struct Oracle {
    pub clipped: [u64; 4],
    pub total: [u64; 4],
    pub cand_len: usize,
    pub ref_len: usize,
    pub bp: f64,
    pub bleu: f64,
}

fn gram_at<'a>(seq: &'a [&'a str], i: usize, n: usize) -> &'a [&'a str] {
    &seq[i..i + n]
}

fn count(seq: &[&str], gram: &[&str]) -> u64 {
    let n = gram.len();
    if seq.len() < n {
        return 0;
    }
    (0..=seq.len() - n).filter(|&i| gram_at(seq, i, n) == gram).count() as u64
}

pub fn bleu(cands: &[Vec<&str>], refs: &[Vec<Vec<&str>>]) -> Oracle {
    let mut clipped = [0u64; 4];
    let mut total = [0u64; 4];
    let mut cand_len = 0;
    let mut ref_len = 0;
    for (cand, rs) in cands.iter().zip(refs) {
        cand_len += cand.len();
        let mut best = usize::MAX;
        for r in rs {
            let better = match best {
                usize::MAX => true,
                b => {
                    r.len().abs_diff(cand.len()) < b.abs_diff(cand.len())
                        || (r.len().abs_diff(cand.len()) == b.abs_diff(cand.len()) && r.len() < b)
                }
            };
            if better {
                best = r.len();
            }
        }
        ref_len += best;
        for n in 1..=4 {
            if cand.len() < n {
                continue;
            }
            let positions = cand.len() - n + 1;
            total[n - 1] += positions as u64;
            for i in 0..positions {
                let g = gram_at(cand, i, n);
                // Count each distinct gram once, at its first position.
                if (0..i).any(|j| gram_at(cand, j, n) == g) {
                    continue;
                }
                let in_cand = count(cand, g);
                let max_ref = rs.iter().map(|r| count(r, g)).max().unwrap_or(0);
                clipped[n - 1] += in_cand.min(max_ref);
            }
        }
    }
    let bp = if cand_len == 0 {
        0.0
    } else if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    let bleu = if (0..4).any(|k| clipped[k] == 0) {
        0.0
    } else {
        let log_sum: f64 = (0..4).map(|k| (clipped[k] as f64 / total[k] as f64).ln()).sum();
        bp * (log_sum / 4.0).exp()
    };
    Oracle {
        clipped,
        total,
        cand_len,
        ref_len,
        bp,
        bleu,
    }
}
