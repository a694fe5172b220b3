//! SubRip subtitle parsing and rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One subtitle cue, timestamps in seconds from movie start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtitleCue {
    pub ordinal: u32,
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SrtError {
    #[error("srt line {line}: expected cue ordinal, found {found:?}")]
    Ordinal { line: usize, found: String },
    #[error("srt cue {ordinal} (line {line}): malformed timestamp line {found:?}")]
    Timestamp {
        ordinal: u32,
        line: usize,
        found: String,
    },
    #[error("srt cue {ordinal}: end {end_s}s precedes start {start_s}s")]
    Inverted { ordinal: u32, start_s: f64, end_s: f64 },
    #[error("srt cue {ordinal}: no text")]
    EmptyText { ordinal: u32 },
}

/// Parses SubRip text. Accepts LF or CRLF line endings, a leading BOM, and
/// any number of blank lines between cues. Cue ordinals need not be
/// consecutive and overlapping cues are kept as-is, in file order.
pub fn parse_srt(text: &str) -> Result<Vec<SubtitleCue>, SrtError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut cues = Vec::new();
    let mut block: Vec<(usize, &str)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            if !block.is_empty() {
                cues.push(parse_block(&block)?);
                block.clear();
            }
        } else {
            block.push((i + 1, line));
        }
    }
    if !block.is_empty() {
        cues.push(parse_block(&block)?);
    }
    Ok(cues)
}

fn parse_block(block: &[(usize, &str)]) -> Result<SubtitleCue, SrtError> {
    let (line_no, first) = block[0];
    let ordinal: u32 = first
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| SrtError::Ordinal {
            line: line_no,
            found: first.to_string(),
        })?;

    let Some(&(ts_line, ts)) = block.get(1) else {
        return Err(SrtError::Timestamp {
            ordinal,
            line: line_no + 1,
            found: String::new(),
        });
    };
    let bad_ts = || SrtError::Timestamp {
        ordinal,
        line: ts_line,
        found: ts.to_string(),
    };
    let (start, end) = ts.split_once("-->").ok_or_else(bad_ts)?;
    let start_ms = parse_timestamp(start.trim()).ok_or_else(bad_ts)?;
    // Anything after the end stamp (position hints like "X1:...") is ignored.
    let end_field = end.split_whitespace().next().unwrap_or("");
    let end_ms = parse_timestamp(end_field).ok_or_else(bad_ts)?;

    let start_s = start_ms as f64 / 1000.0;
    let end_s = end_ms as f64 / 1000.0;
    if end_ms < start_ms {
        return Err(SrtError::Inverted {
            ordinal,
            start_s,
            end_s,
        });
    }

    let text = block[2..]
        .iter()
        .map(|(_, l)| l.trim())
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    if text.is_empty() {
        return Err(SrtError::EmptyText { ordinal });
    }

    Ok(SubtitleCue {
        ordinal,
        start_s,
        end_s,
        text,
    })
}

/// `HH:MM:SS,mmm` to whole milliseconds. A `.` before the millis is tolerated.
fn parse_timestamp(s: &str) -> Option<u64> {
    let (hms, millis) = s.split_once([',', '.'])?;
    let mut parts = hms.split(':');
    let h = digits(parts.next()?)?;
    let m = digits(parts.next()?)?;
    let sec = digits(parts.next()?)?;
    if parts.next().is_some() || m >= 60 || sec >= 60 || millis.len() != 3 {
        return None;
    }
    let ms = digits(millis)?;
    Some(((h * 60 + m) * 60 + sec) * 1000 + ms)
}

fn digits(s: &str) -> Option<u64> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

/// Formats seconds as `HH:MM:SS,mmm`, rounding to the nearest millisecond.
pub fn format_timestamp(seconds: f64) -> String {
    let total_ms = (seconds.max(0.0) * 1000.0).round() as u64;
    let ms = total_ms % 1000;
    let total_s = total_ms / 1000;
    format!(
        "{:02}:{:02}:{:02},{:03}",
        total_s / 3600,
        (total_s / 60) % 60,
        total_s % 60,
        ms
    )
}

/// Canonical SubRip rendering: LF line endings, one text line per cue, a
/// blank line after every cue.
pub fn render_srt(cues: &[SubtitleCue]) -> String {
    let mut out = String::new();
    for cue in cues {
        let _ = write!(
            out,
            "{}\n{} --> {}\n{}\n\n",
            cue.ordinal,
            format_timestamp(cue.start_s),
            format_timestamp(cue.end_s),
            cue.text
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cue(ordinal: u32, start_s: f64, end_s: f64, text: &str) -> SubtitleCue {
        SubtitleCue {
            ordinal,
            start_s,
            end_s,
            text: text.to_string(),
        }
    }

    #[test]
    fn empty_input() {
        assert_eq!(parse_srt("").unwrap(), vec![]);
        assert_eq!(parse_srt("\n\n\r\n").unwrap(), vec![]);
    }

    #[test]
    fn single_cue() {
        let cues = parse_srt("1\n00:00:01,000 --> 00:00:02,500\nHello").unwrap();
        assert_eq!(cues, vec![cue(1, 1.0, 2.5, "Hello")]);
    }

    #[test]
    fn hour_offset_and_multiline_join() {
        let cues = parse_srt("1\n01:00:00,000 --> 01:00:05,250\nA\nB").unwrap();
        assert_eq!(cues, vec![cue(1, 3600.0, 3605.25, "A B")]);
    }

    #[test]
    fn crlf_and_trailing_blank_lines() {
        let text = "1\r\n00:00:01,000 --> 00:00:02,000\r\nHi there\r\n\r\n2\r\n00:00:03,000 --> 00:00:04,000\r\nBye\r\n\r\n\r\n";
        let cues = parse_srt(text).unwrap();
        assert_eq!(
            cues,
            vec![cue(1, 1.0, 2.0, "Hi there"), cue(2, 3.0, 4.0, "Bye")]
        );
    }

    #[test]
    fn bom_and_gappy_ordinals_keep_file_order() {
        let text = "\u{feff}7\n00:00:05,000 --> 00:00:06,000\nlater\n\n3\n00:00:01,000 --> 00:00:02,000\nearlier\n";
        let cues = parse_srt(text).unwrap();
        assert_eq!(cues[0].ordinal, 7);
        assert_eq!(cues[1].ordinal, 3);
    }

    #[test]
    fn overlapping_cues_are_accepted() {
        let text = "1\n00:00:01,000 --> 00:00:05,000\nA\n\n2\n00:00:02,000 --> 00:00:03,000\nB\n";
        assert_eq!(parse_srt(text).unwrap().len(), 2);
    }

    #[test]
    fn malformed_timestamp_reports_ordinal() {
        let text = "1\n00:00:01,000 --> 00:00:02,000\nok\n\n4\n00:00:0x,000 --> 00:00:02,000\nbad\n";
        match parse_srt(text) {
            Err(SrtError::Timestamp { ordinal, line, .. }) => {
                assert_eq!(ordinal, 4);
                assert_eq!(line, 6);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_srt("2\n00:00:01 --> 00:00:02,000\nx"),
            Err(SrtError::Timestamp { ordinal: 2, .. })
        ));
        assert!(matches!(
            parse_srt("2\n00:61:01,000 --> 00:00:02,000\nx"),
            Err(SrtError::Timestamp { ordinal: 2, .. })
        ));
        assert!(matches!(
            parse_srt("5"),
            Err(SrtError::Timestamp { ordinal: 5, .. })
        ));
    }

    #[test]
    fn bad_ordinal_and_empty_text() {
        assert!(matches!(
            parse_srt("one\n00:00:01,000 --> 00:00:02,000\nx"),
            Err(SrtError::Ordinal { line: 1, .. })
        ));
        assert!(matches!(
            parse_srt("1\n00:00:01,000 --> 00:00:02,000\n"),
            Err(SrtError::EmptyText { ordinal: 1 })
        ));
    }

    #[test]
    fn inverted_cue_rejected() {
        assert!(matches!(
            parse_srt("1\n00:00:03,000 --> 00:00:02,000\nx"),
            Err(SrtError::Inverted { ordinal: 1, .. })
        ));
    }

    #[test]
    fn timestamp_formatting() {
        assert_eq!(format_timestamp(3605.25), "01:00:05,250");
        assert_eq!(format_timestamp(0.0), "00:00:00,000");
        assert_eq!(format_timestamp(100.0 * 3600.0 + 0.001), "100:00:00,001");
    }

    #[test]
    fn position_hints_after_end_stamp_are_ignored() {
        let cues = parse_srt("1\n00:00:01,000 --> 00:00:02,000 X1:10 X2:20\nhint").unwrap();
        assert_eq!(cues[0].end_s, 2.0);
    }
}
