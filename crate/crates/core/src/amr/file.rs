use super::parse::{parse_penman, ParseError};
use super::serialize::serialize_penman;
use super::{AmrError, AmrGraph};

/// One blank-line separated block of a PENMAN file.
#[derive(Debug)]
pub struct PenmanBlock {
    /// 1-based line where the block starts.
    pub line: usize,
    /// `#` comment lines of the block, without the leading `#`.
    pub comments: Vec<String>,
    pub graph: Result<AmrGraph, ParseError>,
}

/// Splits PENMAN text into blank-line separated graphs. Lines whose first
/// non-blank character is `#` are comments. Blocks holding only comments are
/// skipped.
pub fn read_penman_blocks(text: &str) -> Vec<PenmanBlock> {
    let mut blocks = Vec::new();
    let mut body = String::new();
    let mut comments = Vec::new();
    let mut start = 0;
    let mut flush = |body: &mut String, comments: &mut Vec<String>, start: usize| {
        if !body.trim().is_empty() {
            blocks.push(PenmanBlock {
                line: start,
                comments: std::mem::take(comments),
                graph: parse_penman(body),
            });
        }
        comments.clear();
        body.clear();
    };
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim_start();
        if trimmed.is_empty() {
            flush(&mut body, &mut comments, start);
            continue;
        }
        if body.is_empty() && comments.is_empty() {
            start = i + 1;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            comments.push(comment.trim().to_string());
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    flush(&mut body, &mut comments, start);
    blocks
}

/// Writes graphs as blank-line separated blocks, each optionally preceded by
/// comment lines.
pub fn write_penman_blocks<'a>(
    entries: impl IntoIterator<Item = (&'a [String], &'a AmrGraph)>,
) -> Result<String, AmrError> {
    let mut out = String::new();
    for (comments, graph) in entries {
        if !out.is_empty() {
            out.push('\n');
        }
        for c in comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        out.push_str(&serialize_penman(graph)?);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_blocks_and_comments() {
        let text = "# ::id 1\n(d / dog)\n\n\n# only a comment\n\n(w / want-01\n   :ARG0 (b / boy))\n\n(x / \n";
        let blocks = read_penman_blocks(text);
        assert_eq!(blocks.len(), 3);
        assert_eq!(blocks[0].comments, ["::id 1"]);
        assert_eq!(blocks[0].line, 1);
        assert_eq!(blocks[1].line, 7);
        assert_eq!(blocks[1].graph.as_ref().unwrap().node_count(), 2);
        assert!(blocks[2].graph.is_err());
    }

    #[test]
    fn write_then_read() {
        let a = parse_penman("(d / dog)").unwrap();
        let b = parse_penman("(w / want-01 :ARG0 (b / boy))").unwrap();
        let note = vec!["::id x".to_string()];
        let text = write_penman_blocks([(&note[..], &a), (&[][..], &b)]).unwrap();
        assert_eq!(text, "# ::id x\n(d / dog)\n\n(w / want-01 :ARG0 (b / boy))\n");
        let back = read_penman_blocks(&text);
        assert!(back[1].graph.as_ref().unwrap().is_isomorphic(&b));
    }
}
