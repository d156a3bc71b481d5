use crate::stats::{mad, rms};
use crate::synthgen::ChannelGroup;
use crate::{Error, MultiChannelSignal, Result};

pub const SUBREGIONS: usize = 4;

/// RMS over a MAD-based estimate of the baseline noise level.
pub fn channel_quality(x: &[f64]) -> f64 {
    let noise = mad(x) / 0.6745;
    let r = rms(x);
    if noise > 0.0 {
        r / noise
    } else if r > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Splits each group into four contiguous, near-equal subregions and keeps
/// the `per_subregion` channels with the best RMS-to-noise ratio in each.
/// Ties keep the lower channel index. Selected indices come back sorted.
pub fn select_channels(
    emg: &MultiChannelSignal,
    groups: &[ChannelGroup],
    per_subregion: usize,
) -> Result<Vec<ChannelGroup>> {
    if per_subregion == 0 {
        return Err(Error::param("per_subregion must be at least 1"));
    }
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        if let Some(&bad) = g.channels.iter().find(|&&c| c >= emg.n_channels()) {
            return Err(Error::shape(format!(
                "group {} refers to channel {bad}, signal has {}",
                g.name,
                emg.n_channels()
            )));
        }
        if g.channels.len() < SUBREGIONS {
            log::warn!(
                "group {} has {} channels (< {SUBREGIONS}); using it whole",
                g.name,
                g.channels.len()
            );
            out.push(g.clone());
            continue;
        }
        let mut selected = Vec::new();
        let n = g.channels.len();
        for r in 0..SUBREGIONS {
            let region = &g.channels[r * n / SUBREGIONS..(r + 1) * n / SUBREGIONS];
            let mut scored: Vec<(f64, usize)> = region
                .iter()
                .map(|&c| (channel_quality(&emg.channel(c).to_vec()), c))
                .collect();
            // Stable sort on score keeps index order among ties.
            scored.sort_by(|a, b| b.0.total_cmp(&a.0));
            selected.extend(scored.iter().take(per_subregion).map(|&(_, c)| c));
        }
        selected.sort_unstable();
        out.push(ChannelGroup {
            name: g.name.clone(),
            channels: selected,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Units;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn group(n: usize) -> Vec<ChannelGroup> {
        vec![ChannelGroup { name: "g".into(), channels: (0..n).collect() }]
    }

    #[test]
    fn identical_channels_keep_first_of_each_subregion() {
        let row: Vec<f64> = (0..500).map(|i| ((i * 7919) % 97) as f64 - 48.0).collect();
        let sig = MultiChannelSignal::from_rows(&vec![row; 12], 2048.0, Units::Volts).unwrap();
        let sel = select_channels(&sig, &group(12), 2).unwrap();
        assert_eq!(sel[0].channels, vec![0, 1, 3, 4, 6, 7, 9, 10]);
    }

    #[test]
    fn noise_channel_is_dropped() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 4000;
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|c| {
                (0..n)
                    .map(|i| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        // Sparse spikes on every channel except 5.
                        let spike = if c != 5 && i % 97 == 0 { 20.0 } else { 0.0 };
                        z + spike
                    })
                    .collect()
            })
            .collect();
        let sig = MultiChannelSignal::from_rows(&rows, 2048.0, Units::Volts).unwrap();
        // Oracle: the RMS ranking within subregion {4, 5} prefers 4.
        let r4 = crate::stats::rms(&rows[4]);
        let r5 = crate::stats::rms(&rows[5]);
        assert!(r4 > r5);
        let sel = select_channels(&sig, &group(8), 1).unwrap();
        assert!(!sel[0].channels.contains(&5));
        assert_eq!(sel[0].channels.len(), 4);
        assert!(sel[0].channels.contains(&4));
    }

    #[test]
    fn large_keep_count_keeps_everything() {
        let sig = MultiChannelSignal::from_rows(&vec![vec![1.0, -1.0, 2.0]; 9], 100.0, Units::Volts)
            .unwrap();
        let sel = select_channels(&sig, &group(9), 5).unwrap();
        assert_eq!(sel[0].channels, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn tiny_group_used_whole() {
        let sig = MultiChannelSignal::from_rows(&vec![vec![1.0, -1.0]; 3], 100.0, Units::Volts).unwrap();
        let sel = select_channels(&sig, &group(3), 1).unwrap();
        assert_eq!(sel[0].channels, vec![0, 1, 2]);
        assert!(select_channels(&sig, &group(3), 0).is_err());
    }
}
