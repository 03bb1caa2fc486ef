//! Porter suffix stripping.
//!
//! Straight port of the classic algorithm: five rule groups applied in
//! order, with the measure/vowel/double-consonant predicates computed on
//! the candidate stem. Within a group only the longest matching suffix is
//! considered; if its condition fails, the group does nothing (no
//! fallthrough to shorter suffixes).
//!
//! Tokens shorter than three characters, or containing anything other
//! than ASCII lowercase letters, are returned unchanged.

/// True when `w[i]` acts as a consonant: not a,e,i,o,u, and `y` only at
/// the start of the word or after a vowel.
fn is_cons(w: &[u8], i: usize) -> bool {
    match w[i] {
        b'a' | b'e' | b'i' | b'o' | b'u' => false,
        b'y' => i == 0 || !is_cons(w, i - 1),
        _ => true,
    }
}

/// The measure m of a stem: the number of vowel-run/consonant-run pairs
/// in the pattern [C](VC)^m[V]. A prefix slice sees the same consonant
/// classification as the full word because `is_cons` only looks backward.
fn measure(w: &[u8]) -> usize {
    let n = w.len();
    let mut i = 0;
    while i < n && is_cons(w, i) {
        i += 1;
    }
    let mut m = 0;
    loop {
        while i < n && !is_cons(w, i) {
            i += 1;
        }
        if i == n {
            return m;
        }
        m += 1;
        while i < n && is_cons(w, i) {
            i += 1;
        }
        if i == n {
            return m;
        }
    }
}

fn has_vowel(w: &[u8]) -> bool {
    (0..w.len()).any(|i| !is_cons(w, i))
}

fn ends_double_cons(w: &[u8]) -> bool {
    let n = w.len();
    n >= 2 && w[n - 1] == w[n - 2] && is_cons(w, n - 1)
}

/// The *o condition: stem ends consonant-vowel-consonant where the final
/// consonant is not w, x, or y.
fn ends_cvc(w: &[u8]) -> bool {
    let n = w.len();
    if n < 3 || !is_cons(w, n - 3) || is_cons(w, n - 2) || !is_cons(w, n - 1) {
        return false;
    }
    !matches!(w[n - 1], b'w' | b'x' | b'y')
}

fn ends_with(w: &[u8], suffix: &str) -> bool {
    w.ends_with(suffix.as_bytes())
}

fn set_suffix(w: &mut Vec<u8>, old_len: usize, replacement: &str) {
    w.truncate(w.len() - old_len);
    w.extend_from_slice(replacement.as_bytes());
}

fn step_1a(w: &mut Vec<u8>) {
    if !ends_with(w, "s") {
        return;
    }
    if ends_with(w, "sses") {
        w.truncate(w.len() - 2);
    } else if ends_with(w, "ies") {
        set_suffix(w, 3, "i");
    } else if !ends_with(w, "ss") {
        w.pop();
    }
}

fn step_1b(w: &mut Vec<u8>) {
    if ends_with(w, "eed") {
        if measure(&w[..w.len() - 3]) > 0 {
            w.pop();
        }
        return;
    }
    let removed = if ends_with(w, "ed") && has_vowel(&w[..w.len() - 2]) {
        w.truncate(w.len() - 2);
        true
    } else if ends_with(w, "ing") && has_vowel(&w[..w.len() - 3]) {
        w.truncate(w.len() - 3);
        true
    } else {
        false
    };
    if !removed {
        return;
    }
    if ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz") {
        w.push(b'e');
    } else if ends_double_cons(w) && !matches!(w[w.len() - 1], b'l' | b's' | b'z') {
        w.pop();
    } else if measure(w) == 1 && ends_cvc(w) {
        w.push(b'e');
    }
}

fn step_1c(w: &mut Vec<u8>) {
    if ends_with(w, "y") && has_vowel(&w[..w.len() - 1]) {
        let last = w.len() - 1;
        w[last] = b'i';
    }
}

/// Suffix pairs ordered so that any suffix that contains another in the
/// same table comes first (ational before tional, ization before ation);
/// the first match wins whether or not its measure condition holds.
const STEP_2: &[(&str, &str)] = &[
    ("ational", "ate"),
    ("tional", "tion"),
    ("enci", "ence"),
    ("anci", "ance"),
    ("izer", "ize"),
    ("abli", "able"),
    ("alli", "al"),
    ("entli", "ent"),
    ("eli", "e"),
    ("ousli", "ous"),
    ("ization", "ize"),
    ("ation", "ate"),
    ("ator", "ate"),
    ("alism", "al"),
    ("iveness", "ive"),
    ("fulness", "ful"),
    ("ousness", "ous"),
    ("aliti", "al"),
    ("iviti", "ive"),
    ("biliti", "ble"),
];

const STEP_3: &[(&str, &str)] = &[
    ("icate", "ic"),
    ("ative", ""),
    ("alize", "al"),
    ("iciti", "ic"),
    ("ical", "ic"),
    ("ful", ""),
    ("ness", ""),
];

fn apply_table(w: &mut Vec<u8>, table: &[(&str, &str)]) {
    for &(suffix, replacement) in table {
        if ends_with(w, suffix) {
            if measure(&w[..w.len() - suffix.len()]) > 0 {
                set_suffix(w, suffix.len(), replacement);
            }
            return;
        }
    }
}

/// Step 4 deletes a suffix when the remaining stem has measure greater
/// than one. "ement" precedes "ment" precedes "ent" for the same
/// longest-match reason as the step 2 table.
const STEP_4: &[&str] = &[
    "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement", "ment", "ent",
    "ion", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
];

fn step_4(w: &mut Vec<u8>) {
    for &suffix in STEP_4 {
        if ends_with(w, suffix) {
            let stem = &w[..w.len() - suffix.len()];
            let extra = suffix != "ion" || matches!(stem.last(), Some(b's') | Some(b't'));
            if measure(stem) > 1 && extra {
                w.truncate(w.len() - suffix.len());
            }
            return;
        }
    }
}

fn step_5(w: &mut Vec<u8>) {
    if ends_with(w, "e") {
        let stem = &w[..w.len() - 1];
        let m = measure(stem);
        if m > 1 || (m == 1 && !ends_cvc(stem)) {
            w.pop();
        }
    }
    if ends_with(w, "ll") && measure(w) > 1 {
        w.pop();
    }
}

/// Stems a single lowercase token.
pub fn stem(token: &str) -> String {
    if token.len() <= 2 || !token.bytes().all(|b| b.is_ascii_lowercase()) {
        return token.to_string();
    }
    let mut w = token.as_bytes().to_vec();
    step_1a(&mut w);
    step_1b(&mut w);
    step_1c(&mut w);
    apply_table(&mut w, STEP_2);
    apply_table(&mut w, STEP_3);
    step_4(&mut w);
    step_5(&mut w);
    String::from_utf8(w).expect("stemming only removes or appends ASCII")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(cases: &[(&str, &str)]) {
        for &(word, expected) in cases {
            assert_eq!(stem(word), expected, "stem({word:?})");
        }
    }

    #[test]
    fn plurals_and_participles() {
        check(&[
            ("caresses", "caress"),
            ("ponies", "poni"),
            ("caress", "caress"),
            ("cats", "cat"),
            ("feed", "feed"),
            ("agreed", "agre"),
            ("plastered", "plaster"),
            ("bled", "bled"),
            ("motoring", "motor"),
            ("sing", "sing"),
        ]);
    }

    #[test]
    fn cleanup_after_ed_ing_removal() {
        check(&[
            ("conflated", "conflat"),
            ("troubled", "troubl"),
            ("sized", "size"),
            ("hopping", "hop"),
            ("tanned", "tan"),
            ("falling", "fall"),
            ("hissing", "hiss"),
            ("fizzed", "fizz"),
            ("failing", "fail"),
            ("filing", "file"),
            ("hoping", "hope"),
        ]);
    }

    #[test]
    fn y_to_i() {
        check(&[("happy", "happi"), ("sky", "sky")]);
    }

    #[test]
    fn derivational_suffixes() {
        check(&[
            ("relational", "relat"),
            ("conditional", "condit"),
            ("rational", "ration"),
            ("vietnamization", "vietnam"),
            ("operator", "oper"),
            ("sensibiliti", "sensibl"),
            ("triplicate", "triplic"),
            ("formative", "form"),
            ("formalize", "formal"),
            ("electriciti", "electr"),
            ("electrical", "electr"),
            ("hopeful", "hope"),
            ("goodness", "good"),
        ]);
    }

    #[test]
    fn tail_suffixes_need_long_stems() {
        check(&[
            ("revival", "reviv"),
            ("adjustable", "adjust"),
            ("replacement", "replac"),
            ("agreement", "agreement"),
            ("adoption", "adopt"),
            ("effective", "effect"),
            ("probate", "probat"),
            ("rate", "rate"),
            ("cease", "ceas"),
            ("controll", "control"),
            ("roll", "roll"),
        ]);
    }

    #[test]
    fn short_and_nonalpha_tokens_pass_through() {
        check(&[("a", "a"), ("be", "be"), ("x86", "x86"), ("o'clock", "o'clock")]);
    }

    #[test]
    fn measure_counts_vc_pairs() {
        for (word, m) in [("tr", 0), ("ee", 0), ("tree", 0), ("y", 0), ("by", 0),
                          ("trouble", 1), ("oats", 1), ("trees", 1), ("ivy", 1),
                          ("troubles", 2), ("private", 2), ("oaten", 2), ("orrery", 2)]
        {
            assert_eq!(measure(word.as_bytes()), m, "measure({word:?})");
        }
    }
}
