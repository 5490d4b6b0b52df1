use std::io::{self, BufRead};

/// Whitespace-delimited tokenizer over a buffered reader. Holds at most one
/// token in memory.
pub(crate) struct Tokenizer<R> {
    reader: R,
    token: Vec<u8>,
    line: u64,
    token_line: u64,
}

impl<R: BufRead> Tokenizer<R> {
    pub(crate) fn new(reader: R) -> Self {
        Self {
            reader,
            token: Vec::with_capacity(256),
            line: 1,
            token_line: 1,
        }
    }

    /// Advances to the next token. Returns `false` at end of input.
    pub(crate) fn advance(&mut self) -> io::Result<bool> {
        self.token.clear();
        loop {
            let buf = match self.reader.fill_buf() {
                Ok(b) => b,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e),
            };
            if buf.is_empty() {
                return Ok(!self.token.is_empty());
            }
            let mut i = 0;
            if self.token.is_empty() {
                while i < buf.len() && buf[i].is_ascii_whitespace() {
                    if buf[i] == b'\n' {
                        self.line += 1;
                    }
                    i += 1;
                }
                self.token_line = self.line;
            }
            let start = i;
            while i < buf.len() && !buf[i].is_ascii_whitespace() {
                i += 1;
            }
            self.token.extend_from_slice(&buf[start..i]);
            let terminated = i < buf.len();
            self.reader.consume(i);
            if terminated && !self.token.is_empty() {
                return Ok(true);
            }
        }
    }

    pub(crate) fn token(&self) -> &[u8] {
        &self.token
    }

    pub(crate) fn token_str(&self) -> String {
        String::from_utf8_lossy(&self.token).into_owned()
    }

    /// Line on which the current token starts.
    pub(crate) fn token_line(&self) -> u64 {
        self.token_line
    }

    pub(crate) fn buffer_capacity(&self) -> usize {
        self.token.capacity()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::BufReader;

    #[test]
    fn splits_across_small_buffers() {
        let text = b"$var wire 1 ! clk $end\n#10\n  b101 \"\n";
        let mut t = Tokenizer::new(BufReader::with_capacity(3, &text[..]));
        let mut out = Vec::new();
        while t.advance().unwrap() {
            out.push((t.token_str(), t.token_line()));
        }
        let toks: Vec<&str> = out.iter().map(|(s, _)| s.as_str()).collect();
        assert_eq!(
            toks,
            ["$var", "wire", "1", "!", "clk", "$end", "#10", "b101", "\""]
        );
        assert_eq!(out[6].1, 2);
        assert_eq!(out[8].1, 3);
    }
}
