//! HTML character reference decoding.

fn named(name: &str) -> Option<char> {
    Some(match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => '\u{a0}',
        "ensp" => '\u{2002}',
        "emsp" => '\u{2003}',
        "thinsp" => '\u{2009}',
        "zwnj" => '\u{200c}',
        "zwj" => '\u{200d}',
        "shy" => '\u{ad}',
        "copy" => '©',
        "reg" => '®',
        "trade" => '™',
        "hellip" => '…',
        "mdash" => '—',
        "ndash" => '–',
        "lsquo" => '‘',
        "rsquo" => '’',
        "sbquo" => '‚',
        "ldquo" => '“',
        "rdquo" => '”',
        "bdquo" => '„',
        "laquo" => '«',
        "raquo" => '»',
        "lsaquo" => '‹',
        "rsaquo" => '›',
        "middot" => '·',
        "bull" => '•',
        "times" => '×',
        "divide" => '÷',
        "deg" => '°',
        "plusmn" => '±',
        "micro" => 'µ',
        "para" => '¶',
        "sect" => '§',
        "euro" => '€',
        "pound" => '£',
        "yen" => '¥',
        "cent" => '¢',
        "curren" => '¤',
        "iexcl" => '¡',
        "iquest" => '¿',
        "frac12" => '½',
        "frac14" => '¼',
        "frac34" => '¾',
        "sup2" => '²',
        "sup3" => '³',
        "larr" => '←',
        "rarr" => '→',
        "uarr" => '↑',
        "darr" => '↓',
        "agrave" => 'à',
        "aacute" => 'á',
        "acirc" => 'â',
        "auml" => 'ä',
        "ccedil" => 'ç',
        "egrave" => 'è',
        "eacute" => 'é',
        "ecirc" => 'ê',
        "euml" => 'ë',
        "iacute" => 'í',
        "icirc" => 'î',
        "ntilde" => 'ñ',
        "oacute" => 'ó',
        "ocirc" => 'ô',
        "ouml" => 'ö',
        "uacute" => 'ú',
        "uuml" => 'ü',
        "szlig" => 'ß',
        "Eacute" => 'É',
        _ => return None,
    })
}

// Legacy references that browsers accept without the trailing semicolon.
const LEGACY: [&str; 6] = ["amp", "lt", "gt", "quot", "nbsp", "copy"];

fn numeric(digits: &str, hex: bool) -> Option<char> {
    let v = u32::from_str_radix(digits, if hex { 16 } else { 10 }).ok()?;
    Some(match v {
        0 => '\u{fffd}',
        // C1 range, interpreted as windows-1252 the way browsers do.
        0x80..=0x9f => encoding_rs::WINDOWS_1252
            .decode_without_bom_handling(&[v as u8])
            .0
            .chars()
            .next()
            .unwrap_or('\u{fffd}'),
        _ => char::from_u32(v).unwrap_or('\u{fffd}'),
    })
}

/// Decodes the reference starting at `s[0] == '&'`. Returns the character
/// and the number of bytes consumed.
fn decode_one(s: &str) -> Option<(char, usize)> {
    let rest = &s[1..];
    if let Some(num) = rest.strip_prefix('#') {
        let (hex, body) = match num.strip_prefix(['x', 'X']) {
            Some(b) => (true, b),
            None => (false, num),
        };
        let len = body.bytes().take_while(|b| if hex { b.is_ascii_hexdigit() } else { b.is_ascii_digit() }).count();
        if len == 0 || len > 8 {
            return None;
        }
        let c = numeric(&body[..len], hex)?;
        let prefix = 2 + usize::from(hex);
        let semi = usize::from(body.as_bytes().get(len) == Some(&b';'));
        return Some((c, prefix + len + semi));
    }
    let len = rest.bytes().take_while(u8::is_ascii_alphanumeric).take(32).count();
    let name = &rest[..len];
    if rest.as_bytes().get(len) == Some(&b';') {
        named(name).map(|c| (c, len + 2))
    } else if LEGACY.contains(&name) {
        named(name).map(|c| (c, len + 1))
    } else {
        None
    }
}

/// Replaces character references in `text`. Unknown references are kept
/// verbatim.
pub fn decode_entities(text: &str) -> std::borrow::Cow<'_, str> {
    if !text.contains('&') {
        return text.into();
    }
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while let Some(rel) = text[i..].find('&') {
        let at = i + rel;
        out.push_str(&text[i..at]);
        match decode_one(&text[at..]) {
            Some((c, n)) => {
                out.push(c);
                i = at + n;
            }
            None => {
                out.push('&');
                i = at + 1;
            }
        }
    }
    out.push_str(&text[i..]);
    out.into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes() {
        assert_eq!(decode_entities("a &amp; b"), "a & b");
        assert_eq!(decode_entities("&lt;p&gt;"), "<p>");
        assert_eq!(decode_entities("&#4608;&#x1200;"), "ሀሀ");
        assert_eq!(decode_entities("&amp b"), "& b");
        assert_eq!(decode_entities("&bogus; &"), "&bogus; &");
        assert_eq!(decode_entities("&#150;"), "–");
        assert_eq!(decode_entities("&#0;"), "\u{fffd}");
        assert_eq!(decode_entities("&#xFFFFFFFFF;"), "&#xFFFFFFFFF;");
    }
}
