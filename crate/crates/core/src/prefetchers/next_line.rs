use serde::{Deserialize, Serialize};

use super::Prefetcher;
use crate::types::{ComponentId, LineAddress, PaeContext};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NextLineParams {
    pub max_degree: u32,
    /// Score points per extra line of degree.
    pub degree_divisor: u32,
    /// Degree used when running without the meta-prefetcher.
    pub standalone_degree: u32,
}

impl Default for NextLineParams {
    fn default() -> Self {
        NextLineParams {
            max_degree: 5,
            degree_divisor: 512,
            standalone_degree: 5,
        }
    }
}

/// Prefetches the `degree` lines following each trigger.
#[derive(Clone, Debug)]
pub struct NextLine {
    params: NextLineParams,
    degree: u32,
    max_line: u64,
}

impl NextLine {
    /// Starts at degree 1 and follows its score through [`NextLine::set_degree`].
    pub fn adaptive(params: NextLineParams, max_line: u64) -> Self {
        NextLine {
            params,
            degree: 1,
            max_line,
        }
    }

    pub fn fixed(degree: u32, max_line: u64) -> Self {
        NextLine {
            params: NextLineParams {
                max_degree: degree.max(1),
                ..NextLineParams::default()
            },
            degree: degree.max(1),
            max_line,
        }
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// `d = clamp(1 + score / divisor, 1, max_degree)`.
    pub fn set_degree(&mut self, score: u16) {
        let divisor = self.params.degree_divisor.max(1);
        self.degree = (1 + score as u32 / divisor).clamp(1, self.params.max_degree.max(1));
    }
}

impl Prefetcher for NextLine {
    fn id(&self) -> ComponentId {
        ComponentId::NextLine
    }

    fn on_pae(&mut self, ctx: &PaeContext) -> Vec<LineAddress> {
        (1..=self.degree as i64)
            .map_while(|i| ctx.line.offset(i, self.max_line))
            .collect()
    }

    fn end_phase(&mut self, score: u16) {
        self.set_degree(score);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prefetchers::test_util::{lines, pae};

    const MAX_LINE: u64 = (1 << 58) - 1;

    #[test]
    fn emits_degree_lines() {
        let mut nl = NextLine::fixed(5, MAX_LINE);
        assert_eq!(
            lines(&nl.on_pae(&pae(0, 100, 0))),
            vec![101, 102, 103, 104, 105]
        );
        let mut nl = NextLine::fixed(1, MAX_LINE);
        assert_eq!(lines(&nl.on_pae(&pae(0, 100, 0))), vec![101]);
    }

    #[test]
    fn clamps_at_address_ceiling() {
        let mut nl = NextLine::fixed(2, MAX_LINE);
        assert!(nl.on_pae(&pae(0, MAX_LINE, 0)).is_empty());
        assert_eq!(lines(&nl.on_pae(&pae(0, MAX_LINE - 1, 0))), vec![MAX_LINE]);
    }

    #[test]
    fn degree_from_score() {
        let mut nl = NextLine::adaptive(NextLineParams::default(), MAX_LINE);
        assert_eq!(nl.degree(), 1);
        nl.set_degree(0);
        assert_eq!(nl.degree(), 1);
        nl.set_degree(1600);
        assert_eq!(nl.degree(), 4);
        nl.set_degree(2047);
        assert_eq!(nl.degree(), 4);

        let mut wide = NextLine::adaptive(
            NextLineParams {
                degree_divisor: 400,
                ..NextLineParams::default()
            },
            MAX_LINE,
        );
        wide.set_degree(2047);
        assert_eq!(wide.degree(), 5);
    }
}
