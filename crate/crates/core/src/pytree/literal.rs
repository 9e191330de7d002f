//! Literal decoding: string escapes, bytes, and arbitrary-size integers.

fn push_escape(out: &mut Vec<u32>, chars: &[char], i: &mut usize, bytes_mode: bool) -> Result<(), String> {
    // `chars[*i]` is the character after the backslash
    let c = chars[*i];
    *i += 1;
    let simple = match c {
        '\n' => return Ok(()),
        '\\' => Some('\\'),
        '\'' => Some('\''),
        '"' => Some('"'),
        'a' => Some('\x07'),
        'b' => Some('\x08'),
        'f' => Some('\x0c'),
        'n' => Some('\n'),
        'r' => Some('\r'),
        't' => Some('\t'),
        'v' => Some('\x0b'),
        _ => None,
    };
    if let Some(s) = simple {
        out.push(s as u32);
        return Ok(());
    }
    let hex = |i: &mut usize, n: usize, what: &str| -> Result<u32, String> {
        let digits: String = chars.iter().skip(*i).take(n).collect();
        if digits.chars().count() != n || !digits.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(format!("(unicode error) truncated {what} escape"));
        }
        *i += n;
        Ok(u32::from_str_radix(&digits, 16).unwrap())
    };
    match c {
        '0'..='7' => {
            let mut v = c.to_digit(8).unwrap();
            for _ in 0..2 {
                match chars.get(*i).and_then(|d| d.to_digit(8)) {
                    Some(d) => {
                        v = v * 8 + d;
                        *i += 1;
                    }
                    None => break,
                }
            }
            out.push(if bytes_mode { v & 0xff } else { v });
        }
        'x' => out.push(hex(i, 2, "\\xXX")?),
        'u' if !bytes_mode => out.push(hex(i, 4, "\\uXXXX")?),
        'U' if !bytes_mode => {
            let v = hex(i, 8, "\\UXXXXXXXX")?;
            if char::from_u32(v).is_none() {
                return Err("(unicode error) illegal Unicode character".into());
            }
            out.push(v);
        }
        'N' if !bytes_mode => {
            // named escapes are kept verbatim; no name table is bundled
            out.push('\\' as u32);
            out.push('N' as u32);
        }
        other => {
            out.push('\\' as u32);
            out.push(other as u32);
        }
    }
    Ok(())
}

fn decode(body: &str, raw: bool, bytes_mode: bool) -> Result<Vec<u32>, String> {
    let chars: Vec<char> = body.chars().collect();
    let mut out = Vec::with_capacity(chars.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if bytes_mode && !c.is_ascii() {
            return Err("bytes can only contain ASCII literal characters".into());
        }
        if c == '\r' {
            // normalize CRLF / CR newlines inside literals
            out.push('\n' as u32);
            i += if chars.get(i + 1) == Some(&'\n') { 2 } else { 1 };
            continue;
        }
        if c == '\\' && !raw && i + 1 < chars.len() {
            i += 1;
            if chars[i] == '\r' {
                i += if chars.get(i + 1) == Some(&'\n') { 2 } else { 1 };
                continue;
            }
            push_escape(&mut out, &chars, &mut i, bytes_mode)?;
            continue;
        }
        out.push(c as u32);
        i += 1;
    }
    Ok(out)
}

pub(crate) fn decode_str(body: &str, raw: bool) -> Result<String, String> {
    let units = decode(body, raw, false)?;
    // lone surrogates cannot live in a Rust string; substitute the replacement char
    Ok(units.into_iter().map(|u| char::from_u32(u).unwrap_or('\u{fffd}')).collect())
}

pub(crate) fn decode_bytes(body: &str, raw: bool) -> Result<Vec<u8>, String> {
    Ok(decode(body, raw, true)?.into_iter().map(|u| u as u8).collect())
}

pub(crate) fn float_value(text: &str) -> f64 {
    text.parse().unwrap_or(f64::INFINITY)
}

/// Render an integer literal (any radix, no underscores, lowercase) in decimal.
pub(crate) fn int_to_decimal(lower: &str) -> String {
    let (radix, digits) = if let Some(d) = lower.strip_prefix("0x") {
        (16, d)
    } else if let Some(d) = lower.strip_prefix("0o") {
        (8, d)
    } else if let Some(d) = lower.strip_prefix("0b") {
        (2, d)
    } else {
        let t = lower.trim_start_matches('0');
        return if t.is_empty() { "0".into() } else { t.into() };
    };
    // little-endian limbs in base 1e9
    const BASE: u64 = 1_000_000_000;
    let mut limbs: Vec<u64> = vec![0];
    for c in digits.chars() {
        let mut carry = c.to_digit(radix).unwrap_or(0) as u64;
        for limb in limbs.iter_mut() {
            let v = *limb * radix as u64 + carry;
            *limb = v % BASE;
            carry = v / BASE;
        }
        while carry > 0 {
            limbs.push(carry % BASE);
            carry /= BASE;
        }
    }
    let mut out = limbs.last().unwrap().to_string();
    for limb in limbs.iter().rev().skip(1) {
        out.push_str(&format!("{limb:09}"));
    }
    out
}
