//! Smith-Waterman local alignment with affine gaps (Gotoh's three-matrix
//! recurrence). Scores are integers; a gap of length k costs
//! `gap_open + (k - 1) * gap_extend`.

use super::{ProteinSequence, SimError};

/// Residue alphabet: the 20 standard amino acids plus X, in BLOSUM order.
pub const AMINO_ALPHABET: &[u8; 21] = b"ARNDCQEGHILKMFPSTWYVX";

/// Maps an uppercase residue byte to its alphabet code.
pub fn residue_code(ch: u8) -> Option<u8> {
    AMINO_ALPHABET.iter().position(|&a| a == ch).map(|i| i as u8)
}

/// A symmetric substitution matrix over [`AMINO_ALPHABET`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubstMatrix {
    pub name: String,
    scores: [[i32; 21]; 21],
}

#[rustfmt::skip]
const BLOSUM62: [[i32; 21]; 21] = [
    // A   R   N   D   C   Q   E   G   H   I   L   K   M   F   P   S   T   W   Y   V   X
    [  4, -1, -2, -2,  0, -1, -1,  0, -2, -1, -1, -1, -1, -2, -1,  1,  0, -3, -2,  0,  0],
    [ -1,  5,  0, -2, -3,  1,  0, -2,  0, -3, -2,  2, -1, -3, -2, -1, -1, -3, -2, -3, -1],
    [ -2,  0,  6,  1, -3,  0,  0,  0,  1, -3, -3,  0, -2, -3, -2,  1,  0, -4, -2, -3, -1],
    [ -2, -2,  1,  6, -3,  0,  2, -1, -1, -3, -4, -1, -3, -3, -1,  0, -1, -4, -3, -3, -1],
    [  0, -3, -3, -3,  9, -3, -4, -3, -3, -1, -1, -3, -1, -2, -3, -1, -1, -2, -2, -1, -2],
    [ -1,  1,  0,  0, -3,  5,  2, -2,  0, -3, -2,  1,  0, -3, -1,  0, -1, -2, -1, -2, -1],
    [ -1,  0,  0,  2, -4,  2,  5, -2,  0, -3, -3,  1, -2, -3, -1,  0, -1, -3, -2, -2, -1],
    [  0, -2,  0, -1, -3, -2, -2,  6, -2, -4, -4, -2, -3, -3, -2,  0, -2, -2, -3, -3, -1],
    [ -2,  0,  1, -1, -3,  0,  0, -2,  8, -3, -3, -1, -2, -1, -2, -1, -2, -2,  2, -3, -1],
    [ -1, -3, -3, -3, -1, -3, -3, -4, -3,  4,  2, -3,  1,  0, -3, -2, -1, -3, -1,  3, -1],
    [ -1, -2, -3, -4, -1, -2, -3, -4, -3,  2,  4, -2,  2,  0, -3, -2, -1, -2, -1,  1, -1],
    [ -1,  2,  0, -1, -3,  1,  1, -2, -1, -3, -2,  5, -1, -3, -1,  0, -1, -3, -2, -2, -1],
    [ -1, -1, -2, -3, -1,  0, -2, -3, -2,  1,  2, -1,  5,  0, -2, -1, -1, -1, -1,  1, -1],
    [ -2, -3, -3, -3, -2, -3, -3, -3, -1,  0,  0, -3,  0,  6, -4, -2, -2,  1,  3, -1, -1],
    [ -1, -2, -2, -1, -3, -1, -1, -2, -2, -3, -3, -1, -2, -4,  7, -1, -1, -4, -3, -2, -2],
    [  1, -1,  1,  0, -1,  0,  0,  0, -1, -2, -2,  0, -1, -2, -1,  4,  1, -3, -2, -2,  0],
    [  0, -1,  0, -1, -1, -1, -1, -2, -2, -1, -1, -1, -1, -2, -1,  1,  5, -2, -2,  0,  0],
    [ -3, -3, -4, -4, -2, -2, -3, -2, -2, -3, -2, -3, -1,  1, -4, -3, -2, 11,  2, -3, -2],
    [ -2, -2, -2, -3, -2, -1, -2, -3,  2, -1, -1, -2, -1,  3, -3, -2, -2,  2,  7, -1, -1],
    [  0, -3, -3, -3, -1, -2, -2, -3, -3,  3,  1, -2,  1, -1, -2, -2,  0, -3, -1,  4, -1],
    [  0, -1, -1, -1, -2, -1, -1, -1, -1, -1, -1, -1, -1, -1, -2,  0,  0, -2, -1, -1, -1],
];

impl SubstMatrix {
    pub fn blosum62() -> SubstMatrix {
        SubstMatrix {
            name: "blosum62".to_string(),
            scores: BLOSUM62,
        }
    }

    /// Flat match/mismatch scoring, mainly for tests and small experiments.
    pub fn uniform(match_score: i32, mismatch_score: i32) -> SubstMatrix {
        let mut scores = [[mismatch_score; 21]; 21];
        for (i, row) in scores.iter_mut().enumerate() {
            row[i] = match_score;
        }
        SubstMatrix {
            name: format!("uniform({match_score},{mismatch_score})"),
            scores,
        }
    }

    #[inline]
    pub fn score(&self, a: u8, b: u8) -> i32 {
        self.scores[a as usize][b as usize]
    }
}

/// Alignment parameters. Both penalties are positive magnitudes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwScoring {
    pub matrix: SubstMatrix,
    pub gap_open: i32,
    pub gap_extend: i32,
}

impl Default for SwScoring {
    /// BLOSUM62 with gap open 10 / extend 1.
    fn default() -> Self {
        SwScoring {
            matrix: SubstMatrix::blosum62(),
            gap_open: 10,
            gap_extend: 1,
        }
    }
}

/// Optimal local alignment score, floored at zero.
pub fn smith_waterman(
    a: &ProteinSequence,
    b: &ProteinSequence,
    scoring: &SwScoring,
) -> Result<i32, SimError> {
    let a = a.codes();
    let b = b.codes();
    let nb = b.len();
    const NEG: i32 = i32::MIN / 4;

    let mut h_prev = vec![0i32; nb + 1];
    let mut h_cur = vec![0i32; nb + 1];
    // f[j]: best score ending in a gap in sequence b at column j, carried
    // down the rows
    let mut f = vec![NEG; nb + 1];
    let mut best = 0i32;

    for &ca in a {
        // e: best score ending in a gap in sequence a, carried along the row
        let mut e = NEG;
        h_cur[0] = 0;
        for (j, &cb) in b.iter().enumerate() {
            let j = j + 1;
            e = (h_cur[j - 1] - scoring.gap_open).max(e - scoring.gap_extend);
            f[j] = (h_prev[j] - scoring.gap_open).max(f[j] - scoring.gap_extend);
            let diag = h_prev[j - 1] + scoring.matrix.score(ca, cb);
            let h = diag.max(e).max(f[j]).max(0);
            h_cur[j] = h;
            if h > best {
                best = h;
            }
        }
        std::mem::swap(&mut h_prev, &mut h_cur);
    }
    Ok(best)
}

/// SW(a,b) / sqrt(SW(a,a) * SW(b,b)), the similarity value fed to the
/// attribute tasks. Clamping to [0,1] is left to the table builder.
pub fn normalized_sw(
    a: &ProteinSequence,
    b: &ProteinSequence,
    scoring: &SwScoring,
) -> Result<f64, SimError> {
    let self_a = smith_waterman(a, a, scoring)?;
    let self_b = smith_waterman(b, b, scoring)?;
    if self_a <= 0 || self_b <= 0 {
        let which = if self_a <= 0 { a } else { b };
        return Err(SimError::DegenerateSequence(which.as_str().to_string()));
    }
    let raw = smith_waterman(a, b, scoring)?;
    Ok(raw as f64 / (self_a as f64 * self_b as f64).sqrt())
}
