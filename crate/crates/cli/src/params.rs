use std::str::FromStr;

use hehdc::ckks::{CkksError, CkksParams};

/// `--params` value: `LOG2N`, `LOG2N:CHAIN` or `LOG2N:CHAIN:SCALE`, where
/// CHAIN is a comma-separated list of prime widths with the special prime
/// last. The degree may also be given as `N` itself (e.g. `8192`).
/// Omitted parts take the defaults for the degree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamsArg {
    pub log2n: u32,
    pub chain: Option<Vec<u32>>,
    pub scale: Option<u32>,
}

impl FromStr for ParamsArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(':');
        let n: u64 = parts
            .next()
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| format!("bad degree in {s:?}"))?;
        let log2n = if n > 32 {
            if !n.is_power_of_two() {
                return Err(format!("degree {n} is not a power of two"));
            }
            n.trailing_zeros()
        } else {
            n as u32
        };
        let chain = match parts.next() {
            Some(c) if !c.trim().is_empty() => Some(
                c.split(',')
                    .map(|b| b.trim().parse::<u32>().map_err(|_| format!("bad prime width {b:?}")))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            _ => None,
        };
        let scale = match parts.next() {
            Some(x) => Some(x.trim().parse().map_err(|_| format!("bad scale {x:?}"))?),
            None => None,
        };
        if parts.next().is_some() {
            return Err(format!("too many ':' fields in {s:?}"));
        }
        Ok(ParamsArg { log2n, chain, scale })
    }
}

impl ParamsArg {
    pub fn build(&self) -> Result<CkksParams, CkksError> {
        let base = match &self.chain {
            Some(chain) => {
                let default_scale = hehdc::ckks::default_chain(self.log2n).map_or(20, |d| d.1);
                CkksParams::new(self.log2n, chain, self.scale.unwrap_or(default_scale))?
            }
            None => CkksParams::standard(self.log2n)?,
        };
        match self.scale {
            Some(s) if s != base.scale_log2() => base.with_scale(s),
            _ => Ok(base),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_forms() {
        assert_eq!("13".parse::<ParamsArg>().unwrap(), ParamsArg { log2n: 13, chain: None, scale: None });
        assert_eq!("8192".parse::<ParamsArg>().unwrap().log2n, 13);
        let p: ParamsArg = "12:54,54:28".parse().unwrap();
        assert_eq!(p.chain, Some(vec![54, 54]));
        assert_eq!(p.scale, Some(28));
        assert_eq!(p.build().unwrap().scale_log2(), 28);
        assert!("3000".parse::<ParamsArg>().is_err());
        assert!("12:a".parse::<ParamsArg>().is_err());
        assert!("12:54,54:30:1".parse::<ParamsArg>().is_err());
    }

    #[test]
    fn over_budget_is_a_crypto_error() {
        let p: ParamsArg = "11:54,54:30".parse().unwrap();
        assert!(matches!(p.build(), Err(CkksError::SecurityBudgetExceeded { .. })));
    }
}
