//! 16x2 character LCD model.

use serde::Serialize;

pub const COLS: usize = 16;
pub const ROWS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Lcd {
    rows: [String; ROWS],
}

fn printable(c: char) -> char {
    if c.is_ascii_graphic() || c == ' ' {
        c
    } else {
        '?'
    }
}

/// Fits `text` into exactly one row: truncated, non-printables replaced,
/// right-padded with spaces.
pub fn fit_row(text: &str) -> String {
    let mut row: String = text.chars().take(COLS).map(printable).collect();
    let len = row.chars().count();
    row.extend(std::iter::repeat_n(' ', COLS - len));
    row
}

impl Lcd {
    pub fn blank() -> Self {
        Lcd {
            rows: [fit_row(""), fit_row("")],
        }
    }

    pub fn set_row(&mut self, index: usize, text: &str) {
        self.rows[index] = fit_row(text);
    }

    pub fn row(&self, index: usize) -> &str {
        &self.rows[index]
    }

    pub fn rows(&self) -> Vec<String> {
        self.rows.to_vec()
    }

    pub fn is_blank(&self) -> bool {
        self.rows.iter().all(|r| r.chars().all(|c| c == ' '))
    }
}

impl Default for Lcd {
    fn default() -> Self {
        Self::blank()
    }
}
