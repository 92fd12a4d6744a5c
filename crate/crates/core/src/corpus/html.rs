//! Tolerant HTML-to-text conversion. Not a parser: tags are scanned
//! lexically, which is enough for policy pages and never fails.

const SKIP_CONTENT: &[&str] = &["script", "style", "head", "noscript", "template", "svg", "iframe", "object"];

const BLOCK: &[&str] = &[
    "address", "article", "aside", "blockquote", "body", "br", "caption", "dd", "details", "div", "dl", "dt",
    "fieldset", "figcaption", "figure", "footer", "form", "h1", "h2", "h3", "h4", "h5", "h6", "header", "hr",
    "html", "li", "main", "nav", "ol", "p", "pre", "section", "summary", "table", "tbody", "thead", "tfoot",
    "title", "tr", "ul",
];

const CELL: &[&str] = &["td", "th"];

const BREAK: char = '\u{0}';

fn named_entity(name: &str) -> Option<&'static str> {
    Some(match name {
        "amp" => "&",
        "lt" => "<",
        "gt" => ">",
        "quot" => "\"",
        "apos" => "'",
        "nbsp" => " ",
        "shy" => "",
        "copy" => "©",
        "reg" => "®",
        "trade" => "™",
        "hellip" => "…",
        "mdash" => "\u{2014}",
        "ndash" => "–",
        "lsquo" => "‘",
        "rsquo" => "’",
        "ldquo" => "“",
        "rdquo" => "”",
        "laquo" => "«",
        "raquo" => "»",
        "middot" => "·",
        "bull" => "•",
        "euro" => "€",
        "pound" => "£",
        "sect" => "\u{a7}",
        "para" => "¶",
        "deg" => "°",
        _ => return None,
    })
}

/// Decodes `&name;`, `&#nnn;` and `&#xhh;`. Unknown or malformed
/// references are kept as written.
pub fn decode_entities(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        rest = &rest[amp..];
        let end = rest[1..].find(|c: char| c == ';' || c == '&' || c.is_whitespace()).map(|i| i + 1);
        let decoded = match end {
            Some(e) if rest.as_bytes()[e] == b';' && e <= 32 => {
                let body = &rest[1..e];
                let ch = if let Some(num) = body.strip_prefix('#') {
                    let code = match num.strip_prefix(['x', 'X']) {
                        Some(hex) => u32::from_str_radix(hex, 16).ok(),
                        None => num.parse::<u32>().ok(),
                    };
                    code.and_then(char::from_u32).map(String::from)
                } else {
                    named_entity(body).map(String::from)
                };
                ch.map(|c| (c, e + 1))
            }
            _ => None,
        };
        match decoded {
            Some((text, used)) => {
                out.push_str(&text);
                rest = &rest[used..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn find_ci(hay: &str, needle: &str) -> Option<usize> {
    hay.as_bytes()
        .windows(needle.len())
        .position(|w| w.eq_ignore_ascii_case(needle.as_bytes()))
}

/// End of a tag starting at `s[0] == '<'`, honouring quoted attribute
/// values. Returns the index just past `>`.
fn tag_end(s: &str) -> Option<usize> {
    let mut quote = None;
    for (i, c) in s.char_indices().skip(1) {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None if c == '"' || c == '\'' => quote = Some(c),
            None if c == '>' => return Some(i + 1),
            None => {}
        }
    }
    None
}

/// Plain text of an HTML document: script/style/head removed, tags
/// stripped, block elements on their own lines, entities decoded and
/// whitespace collapsed. Lines are separated by `\n`.
pub fn extract_text(html: &str) -> String {
    let mut raw = String::with_capacity(html.len() / 2);
    let mut i = 0;
    while i < html.len() {
        let rest = &html[i..];
        let Some(lt) = rest.find('<') else {
            raw.push_str(&decode_entities(rest));
            break;
        };
        raw.push_str(&decode_entities(&rest[..lt]));
        let tag = &rest[lt..];
        i += lt;
        if tag.starts_with("<!--") {
            i += tag.find("-->").map_or(tag.len(), |e| e + 3);
            continue;
        }
        let after = tag[1..].chars().next();
        let closing = after == Some('/');
        let name_start = if closing { 2 } else { 1 };
        let is_tag = match tag[name_start.min(tag.len())..].chars().next() {
            Some(c) if c.is_ascii_alphabetic() => true,
            _ => matches!(after, Some('!') | Some('?')),
        };
        if !is_tag {
            raw.push('<');
            i += 1;
            continue;
        }
        let Some(end) = tag_end(tag) else {
            raw.push('<');
            i += 1;
            continue;
        };
        let name: String = tag[name_start..end]
            .chars()
            .take_while(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        let self_closing = tag[..end].trim_end_matches('>').ends_with('/');
        i += end;
        if !closing && !self_closing && SKIP_CONTENT.contains(&name.as_str()) {
            let close = format!("</{name}");
            match find_ci(&html[i..], &close) {
                Some(p) => i += p + tag_end(&html[i + p..]).unwrap_or(html.len() - i - p),
                None => i = html.len(),
            }
            continue;
        }
        if BLOCK.contains(&name.as_str()) {
            raw.push(BREAK);
        } else if CELL.contains(&name.as_str()) {
            raw.push(' ');
        }
    }
    let mut out = String::with_capacity(raw.len());
    for line in raw.split(BREAK) {
        let mut first = true;
        for word in line.split(|c: char| c.is_whitespace()).filter(|w| !w.is_empty()) {
            if first {
                if !out.is_empty() {
                    out.push('\n');
                }
                first = false;
            } else {
                out.push(' ');
            }
            out.push_str(word);
        }
    }
    out
}
