//! The `[END]` termination sign.
//!
//! The sign is a control token: it decides phase transitions and must never
//! reach the customer. Removal is a stack reduction so that nested forms like
//! `[EN[END]D]` are removed completely.

/// The literal control token, matched case-sensitively.
pub const END_SIGN: &str = "[END]";

const SIGN: [char; 5] = ['[', 'E', 'N', 'D', ']'];

pub fn contains_end_sign(text: &str) -> bool {
    text.contains(END_SIGN)
}

/// Pushes `c` and pops a completed sign off the top. Returns true on a pop.
fn push_reduce(stack: &mut Vec<char>, c: char) -> bool {
    stack.push(c);
    if stack.len() >= SIGN.len() && stack[stack.len() - SIGN.len()..] == SIGN {
        stack.truncate(stack.len() - SIGN.len());
        true
    } else {
        false
    }
}

/// Removes every occurrence of the sign, including ones formed by removal.
///
/// Whitespace policy at each removal point: if whitespace touched the removed
/// sign, the whole whitespace run collapses to a single space; otherwise the
/// neighbours are joined directly (`"A[END]B"` becomes `"AB"`). The result is
/// trimmed.
pub fn strip_end_sign(text: &str) -> String {
    let mut stack = Vec::with_capacity(text.len());
    let mut cuts: Vec<usize> = Vec::new();
    for c in text.chars() {
        if push_reduce(&mut stack, c) {
            let len = stack.len();
            for cut in cuts.iter_mut() {
                *cut = (*cut).min(len);
            }
            cuts.push(len);
        }
    }
    if cuts.is_empty() {
        return stack.into_iter().collect::<String>().trim().to_owned();
    }
    cuts.sort_unstable();
    cuts.dedup();

    // Mark which characters belong to a whitespace run touching a cut.
    let mut collapse = vec![false; stack.len()];
    for &cut in &cuts {
        let mut lo = cut;
        while lo > 0 && stack[lo - 1].is_whitespace() {
            lo -= 1;
        }
        let mut hi = cut;
        while hi < stack.len() && stack[hi].is_whitespace() {
            hi += 1;
        }
        collapse[lo..hi].iter_mut().for_each(|m| *m = true);
    }
    let mut out = String::with_capacity(stack.len());
    let mut in_run = false;
    for (c, marked) in stack.into_iter().zip(collapse) {
        if marked {
            if !in_run {
                out.push(' ');
            }
            in_run = true;
        } else {
            in_run = false;
            out.push(c);
        }
    }
    out.trim().to_owned()
}

/// Incremental sign removal over a chunked stream.
///
/// Text is released as soon as it can no longer become part of a sign. Held
/// text is always a run of partial signs such as `[EN` or `[E[EN`.
#[derive(Debug, Default, Clone)]
pub struct SignFilter {
    stack: Vec<char>,
}

impl SignFilter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feeds one chunk and returns the text that is now safe to emit.
    pub fn push(&mut self, chunk: &str) -> String {
        for c in chunk.chars() {
            push_reduce(&mut self.stack, c);
        }
        // Anything below the held suffix can never be popped again.
        let keep_from = self.held_start();
        self.stack.drain(..keep_from).collect()
    }

    /// Releases whatever is still held at end of stream.
    pub fn finish(&mut self) -> String {
        self.stack.drain(..).collect()
    }

    /// Start of the longest suffix made only of proper sign prefixes.
    fn held_start(&self) -> usize {
        let mut start = self.stack.len();
        let mut piece_end = self.stack.len();
        for i in (0..self.stack.len()).rev() {
            if self.stack[i] == '[' {
                let piece = &self.stack[i..piece_end];
                if piece.len() < SIGN.len() && SIGN.starts_with(piece) {
                    start = i;
                    piece_end = i;
                    continue;
                }
                break;
            }
            if piece_end - i >= SIGN.len() {
                break;
            }
        }
        start
    }
}
