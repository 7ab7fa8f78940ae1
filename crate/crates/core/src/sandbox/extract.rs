use super::{ExtractionStatus, ProgramSource};

struct Fences<'a> {
    closed: Vec<&'a str>,
    unclosed: bool,
}

fn is_closing_fence(line: &str) -> bool {
    let t = line.trim();
    t.len() >= 3 && t.chars().all(|c| c == '`')
}

fn scan(text: &str) -> Fences<'_> {
    let mut closed = Vec::new();
    // Byte offset where the body of the currently open block starts.
    let mut open: Option<usize> = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let line_start = offset;
        offset += line.len();
        match open {
            None => {
                if line.trim_start().starts_with("```") {
                    open = Some(offset);
                }
            }
            Some(body_start) => {
                if is_closing_fence(line) {
                    closed.push(&text[body_start..line_start]);
                    open = None;
                }
            }
        }
    }
    Fences { closed, unclosed: open.is_some() }
}

/// Extract the last closed triple-backtick block from a model response.
///
/// A fence opens on any line starting with three backticks (an optional
/// language tag may follow) and closes on a line made only of backticks.
/// If the final fence never closes the response is
/// [`ExtractionStatus::IncompleteCodeBlock`], even when earlier blocks were
/// complete.
pub fn extract_code(raw_response: &str) -> ProgramSource {
    let fences = scan(raw_response);
    let (status, code) = if fences.unclosed {
        (ExtractionStatus::IncompleteCodeBlock, None)
    } else if let Some(last) = fences.closed.last() {
        let body = last.strip_suffix('\n').unwrap_or(last);
        let body = body.strip_suffix('\r').unwrap_or(body);
        (ExtractionStatus::Extracted, Some(body.to_string()))
    } else {
        (ExtractionStatus::NoCodeBlock, None)
    };
    ProgramSource {
        raw_response: raw_response.to_string(),
        extracted_code: code,
        extraction_status: status,
    }
}

/// Number of fenced blocks in `text`, counting a trailing unclosed block.
pub fn count_fenced_blocks(text: &str) -> usize {
    let fences = scan(text);
    fences.closed.len() + usize::from(fences.unclosed)
}
