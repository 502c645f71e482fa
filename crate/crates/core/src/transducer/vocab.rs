use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

pub const BLANK_SYMBOL: &str = "<blank>";

/// Output symbol inventory: blank, characters, and (optionally) emotion tags.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    symbols: Vec<String>,
    blank_id: usize,
    tag_ids: Vec<usize>,
}

impl Vocab {
    pub fn new(symbols: Vec<String>, blank_id: usize, tag_ids: Vec<usize>) -> Result<Self> {
        ensure!(blank_id < symbols.len(), "blank id {blank_id} out of range");
        let mut seen = HashSet::new();
        for s in &symbols {
            ensure!(seen.insert(s.as_str()), "duplicate symbol {s:?}");
        }
        for &t in &tag_ids {
            ensure!(t < symbols.len() && t != blank_id, "bad tag id {t}");
        }
        let unique: HashSet<_> = tag_ids.iter().collect();
        ensure!(unique.len() == tag_ids.len(), "duplicate tag ids");
        Ok(Vocab {
            symbols,
            blank_id,
            tag_ids,
        })
    }

    /// Blank at id 0 followed by `chars` in order.
    pub fn with_blank<S: AsRef<str>>(chars: &[S]) -> Result<Self> {
        let mut symbols = vec![BLANK_SYMBOL.to_string()];
        symbols.extend(chars.iter().map(|c| c.as_ref().to_string()));
        Vocab::new(symbols, 0, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn blank_id(&self) -> usize {
        self.blank_id
    }

    pub fn tag_ids(&self) -> &[usize] {
        &self.tag_ids
    }

    pub fn is_tag(&self, id: usize) -> bool {
        self.tag_ids.contains(&id)
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    pub fn id_of(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    /// Character symbols (neither blank nor tag), in id order.
    pub fn char_ids(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.symbols.len()).filter(|&i| i != self.blank_id && !self.is_tag(i))
    }

    pub fn push_tag(&mut self, symbol: String) -> Result<usize> {
        ensure!(self.id_of(&symbol).is_none(), "symbol {symbol:?} already in vocab");
        self.symbols.push(symbol);
        let id = self.symbols.len() - 1;
        self.tag_ids.push(id);
        Ok(id)
    }

    /// Renders ids as text. Characters are concatenated; a tag is separated
    /// from preceding text by one space, as in `I FEEL HAPPY TODAY <HAPPY>`.
    /// Blank ids render as nothing.
    pub fn render(&self, ids: &[usize]) -> String {
        let mut out = String::new();
        for &id in ids {
            if id == self.blank_id {
                continue;
            }
            let Some(sym) = self.symbol(id) else { continue };
            if self.is_tag(id) && !out.is_empty() && !out.ends_with(' ') {
                out.push(' ');
            }
            out.push_str(sym);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_uniqueness_and_blank() {
        assert!(Vocab::new(vec!["a".into(), "a".into()], 0, vec![]).is_err());
        assert!(Vocab::new(vec!["a".into()], 1, vec![]).is_err());
        assert!(Vocab::new(vec!["_".into(), "a".into()], 0, vec![0]).is_err());
        let v = Vocab::with_blank(&["a", "b"]).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.blank_id(), 0);
        assert_eq!(v.char_ids().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn render_spaces_tags() {
        let mut v = Vocab::with_blank(&["I", " ", "F"]).unwrap();
        let happy = v.push_tag("<HAPPY>".into()).unwrap();
        assert_eq!(v.render(&[1, 2, 3, happy]), "I F <HAPPY>");
        assert_eq!(v.render(&[1, 2, happy]), "I <HAPPY>");
        assert_eq!(v.render(&[happy]), "<HAPPY>");
        assert_eq!(v.render(&[0, 1, 0]), "I");
    }
}
