use serde::{Deserialize, Serialize};

use super::image::{bits_required, ImageFrame};
use super::info::preserved_info;
use super::transform::TransformSpec;
use crate::error::{invalid, Result};

/// One step of a bandwidth schedule: from `start` seconds on, frames may
/// carry at most `bits`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetStep {
    pub start: f64,
    pub bits: u64,
}

/// Piecewise-constant per-frame bit budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<BudgetStep>", into = "Vec<BudgetStep>")]
pub struct ChannelBudget {
    steps: Vec<BudgetStep>,
}

impl ChannelBudget {
    /// Steps must be non-empty with strictly increasing finite starts and
    /// positive budgets. Times before the first start use the first budget.
    pub fn new(steps: Vec<BudgetStep>) -> Result<Self> {
        if steps.is_empty() {
            return Err(invalid("budget schedule is empty"));
        }
        for s in &steps {
            if !s.start.is_finite() {
                return Err(invalid("budget start times must be finite"));
            }
            if s.bits == 0 {
                return Err(invalid(format!("budget at t = {} must be positive", s.start)));
            }
        }
        if steps.windows(2).any(|w| w[1].start <= w[0].start) {
            return Err(invalid("budget start times must be strictly increasing"));
        }
        Ok(Self { steps })
    }

    pub fn constant(bits: u64) -> Result<Self> {
        Self::new(vec![BudgetStep { start: 0.0, bits }])
    }

    pub fn steps(&self) -> &[BudgetStep] {
        &self.steps
    }

    /// Budget in force at time `t`.
    pub fn at(&self, t: f64) -> u64 {
        let i = self.steps.partition_point(|s| s.start <= t);
        self.steps[i.saturating_sub(1)].bits
    }
}

impl TryFrom<Vec<BudgetStep>> for ChannelBudget {
    type Error = crate::error::Error;

    fn try_from(v: Vec<BudgetStep>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ChannelBudget> for Vec<BudgetStep> {
    fn from(b: ChannelBudget) -> Self {
        b.steps
    }
}

/// Outcome of [`select_transform`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Position of the choice in the candidate list.
    pub index: usize,
    pub spec: TransformSpec,
    pub bits: u64,
    pub budget: u64,
    /// `I(h(frame), frame)` in bits.
    pub mi: f64,
    /// Set when no candidate fit and the cheapest one was returned anyway.
    pub over_budget: bool,
}

/// Picks the candidate that keeps the most information about `frame`
/// while fitting the budget at time `t`.
///
/// Ties go to fewer bits, then to the earlier candidate. When nothing
/// fits, the cheapest candidate is returned with `over_budget` set.
pub fn select_transform(
    candidates: &[TransformSpec],
    frame: &ImageFrame,
    budget: &ChannelBudget,
    t: f64,
    bins: Option<usize>,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(invalid("no candidate transforms"));
    }
    let cap = budget.at(t);
    let mut sized = Vec::with_capacity(candidates.len());
    for h in candidates {
        sized.push(bits_required(&h.apply(frame)?));
    }

    let mut best: Option<(usize, f64)> = None;
    for (i, h) in candidates.iter().enumerate() {
        if sized[i] > cap {
            continue;
        }
        let mi = preserved_info(h, frame, bins)?;
        let better = match best {
            None => true,
            Some((j, m)) => mi > m || (mi == m && sized[i] < sized[j]),
        };
        if better {
            best = Some((i, mi));
        }
    }

    let (index, mi, over_budget) = match best {
        Some((i, mi)) => (i, mi, false),
        None => {
            let i = (0..candidates.len()).min_by_key(|&i| (sized[i], i)).expect("non-empty");
            (i, preserved_info(&candidates[i], frame, bins)?, true)
        }
    };
    Ok(Selection {
        index,
        spec: candidates[index].clone(),
        bits: sized[index],
        budget: cap,
        mi,
        over_budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obschannel::image::ChannelModel;
    use crate::obschannel::transform::{to_grayscale, ThresholdMode};

    fn candidates() -> Vec<TransformSpec> {
        vec![
            TransformSpec::identity(),
            TransformSpec::grayscale(),
            TransformSpec::binarize(ThresholdMode::Otsu),
        ]
    }

    fn frame() -> ImageFrame {
        ImageFrame::color_from_fn(16, 12, |x, y| [(x * 15) as u8, (y * 20) as u8, ((x + y) * 7) as u8])
    }

    #[test]
    fn schedule_lookup() {
        let b = ChannelBudget::new(vec![
            BudgetStep { start: 0.0, bits: 100 },
            BudgetStep { start: 1.0, bits: 50 },
        ])
        .unwrap();
        assert_eq!(b.at(-1.0), 100);
        assert_eq!(b.at(0.5), 100);
        assert_eq!(b.at(1.0), 50);
        assert_eq!(b.at(9.0), 50);
        assert!(ChannelBudget::constant(0).is_err());
        assert!(ChannelBudget::new(vec![]).is_err());
    }

    #[test]
    fn generous_budget() {
        // Color frames are compared by luminance, so grayscale keeps as much
        // as identity with a third of the bits.
        let f = frame();
        let b = ChannelBudget::constant(bits_required(&f)).unwrap();
        let s = select_transform(&candidates(), &f, &b, 0.0, None).unwrap();
        assert_eq!(s.index, 1);
        assert!(!s.over_budget);
        let id = preserved_info(&TransformSpec::identity(), &f, None).unwrap();
        assert_eq!(s.mi, id);

        let g = to_grayscale(&f).unwrap();
        let s = select_transform(&candidates(), &g, &b, 0.0, None).unwrap();
        assert_eq!(s.index, 0);
    }

    #[test]
    fn binary_budget_forces_binarize() {
        let f = frame();
        let b = ChannelBudget::constant((f.pixel_count()) as u64).unwrap();
        let s = select_transform(&candidates(), &f, &b, 0.0, None).unwrap();
        assert_eq!(s.index, 2);
        assert_eq!(s.bits, 192);
        assert!(!s.over_budget);
    }

    #[test]
    fn nothing_fits() {
        let f = frame();
        let b = ChannelBudget::constant(10).unwrap();
        let s = select_transform(&candidates(), &f, &b, 0.0, None).unwrap();
        assert_eq!(s.index, 2);
        assert!(s.over_budget);
    }

    #[test]
    fn equal_information_and_size_keeps_list_order() {
        let f = ImageFrame::gray_from_fn(5, 5, |x, y| (x * 50 + y) as u8);
        assert_eq!(f.channels(), ChannelModel::Gray);
        let b = ChannelBudget::constant(1 << 20).unwrap();
        let c = vec![TransformSpec::grayscale(), TransformSpec::identity()];
        assert_eq!(select_transform(&c, &f, &b, 0.0, None).unwrap().index, 0);
    }
}
