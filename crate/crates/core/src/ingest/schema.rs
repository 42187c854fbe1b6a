
use super::{IngestError, Result};

/// The factor schema shipped with the crate.
pub const DEFAULT_SCHEMA: &str = include_str!("../../data/factor_schema.cfg");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    Ordinal,
    Binary,
    Continuous,
}

impl std::str::FromStr for FactorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ordinal" => Ok(FactorKind::Ordinal),
            "binary" => Ok(FactorKind::Binary),
            "continuous" => Ok(FactorKind::Continuous),
            other => Err(format!("unknown kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorSpec {
    pub name: String,
    pub kind: FactorKind,
    pub required: bool,
    /// Label to code, in declaration order.
    pub encoding: Vec<(String, f64)>,
}

impl FactorSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        FactorSpec {
            name: name.into(),
            kind: FactorKind::Continuous,
            required: false,
            encoding: Vec::new(),
        }
    }

    /// Encodes one cell. Labels match case-insensitively; numeric cells must
    /// be declared codes (or 0/1 for an unmapped binary factor).
    pub fn encode(&self, cell: &str) -> std::result::Result<f64, String> {
        let cell = cell.trim();
        if self.kind == FactorKind::Continuous {
            return match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err("not a finite number".into()),
            };
        }
        if let Some((_, code)) = self
            .encoding
            .iter()
            .find(|(label, _)| label.eq_ignore_ascii_case(cell))
        {
            return Ok(*code);
        }
        if let Ok(v) = cell.parse::<f64>() {
            let allowed = if self.encoding.is_empty() && self.kind == FactorKind::Binary {
                v == 0.0 || v == 1.0
            } else {
                self.encoding.iter().any(|(_, c)| *c == v)
            };
            if allowed {
                return Ok(v);
            }
            return Err("code outside the declared encoding".into());
        }
        Err("label outside the declared encoding".into())
    }

    /// Label of a code, when the encoding declares one.
    pub fn decode(&self, code: f64) -> Option<&str> {
        self.encoding
            .iter()
            .find(|(_, c)| *c == code)
            .map(|(l, _)| l.as_str())
    }
}

/// Ordered set of factor specifications.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FactorSchema {
    pub factors: Vec<FactorSpec>,
}

impl FactorSchema {
    /// Every named column as an optional continuous factor.
    pub fn all_continuous<S: AsRef<str>>(names: &[S]) -> Self {
        FactorSchema {
            factors: names.iter().map(|n| FactorSpec::continuous(n.as_ref())).collect(),
        }
    }

    pub fn shipped() -> Self {
        Self::parse(DEFAULT_SCHEMA).expect("shipped schema parses")
    }

    pub fn get(&self, name: &str) -> Option<&FactorSpec> {
        self.factors.iter().find(|f| f.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.factors.iter().map(|f| f.name.clone()).collect()
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| IngestError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses the sectioned `key = value` format. `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let err = |line: usize, message: String| IngestError::Schema { line, message };
        let mut factors: Vec<FactorSpec> = Vec::new();
        let mut has_kind: Vec<bool> = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if name.is_empty() || name.contains(',') {
                    return Err(err(line_no, format!("invalid factor name `{name}`")));
                }
                if factors.iter().any(|f| f.name == name) {
                    return Err(err(line_no, format!("duplicate factor `{name}`")));
                }
                factors.push(FactorSpec::continuous(name));
                has_kind.push(false);
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(err(line_no, "expected `key = value`".into()));
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(spec) = factors.last_mut() else {
                return Err(err(line_no, "entry before any [factor] section".into()));
            };
            match key {
                "kind" => {
                    spec.kind = value.parse().map_err(|m| err(line_no, m))?;
                    *has_kind.last_mut().expect("section open") = true;
                }
                "required" => {
                    spec.required = match value {
                        "true" => true,
                        "false" => false,
                        _ => return Err(err(line_no, format!("required must be true or false, got `{value}`"))),
                    }
                }
                _ => {
                    let Some(label) = key.strip_prefix("map.") else {
                        return Err(err(line_no, format!("unknown key `{key}`")));
                    };
                    let label = label.trim();
                    let code: f64 = value
                        .parse()
                        .ok()
                        .filter(|v: &f64| v.is_finite())
                        .ok_or_else(|| err(line_no, format!("code `{value}` is not a number")))?;
                    if spec.encoding.iter().any(|(l, _)| l.eq_ignore_ascii_case(label)) {
                        return Err(err(line_no, format!("label `{label}` declared twice")));
                    }
                    if spec.encoding.iter().any(|(_, c)| *c == code) {
                        return Err(err(line_no, format!("code {code} already used; encodings must be injective")));
                    }
                    spec.encoding.push((label.to_string(), code));
                }
            }
        }
        for (i, spec) in factors.iter().enumerate() {
            if !has_kind[i] {
                return Err(err(0, format!("factor `{}` has no kind", spec.name)));
            }
            if spec.kind == FactorKind::Continuous && !spec.encoding.is_empty() {
                return Err(err(0, format!("continuous factor `{}` cannot declare a map", spec.name)));
            }
            if spec.kind == FactorKind::Binary
                && spec.encoding.iter().any(|(_, c)| *c != 0.0 && *c != 1.0)
            {
                return Err(err(0, format!("binary factor `{}` must use codes 0 and 1", spec.name)));
            }
        }
        Ok(FactorSchema { factors })
    }

    /// Renders the schema back to its text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for f in &self.factors {
            let kind = match f.kind {
                FactorKind::Ordinal => "ordinal",
                FactorKind::Binary => "binary",
                FactorKind::Continuous => "continuous",
            };
            out.push_str(&format!("[{}]\nkind = {kind}\nrequired = {}\n", f.name, f.required));
            for (label, code) in &f.encoding {
                out.push_str(&format!("map.{label} = {code}\n"));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_schema_is_valid() {
        let s = FactorSchema::shipped();
        let grade = s.get("histologic_grade").unwrap();
        assert_eq!(grade.kind, FactorKind::Ordinal);
        assert_eq!(grade.encode("G3"), Ok(3.0));
        assert_eq!(grade.encode("g2"), Ok(2.0));
        assert_eq!(grade.encode("4"), Ok(4.0));
        assert!(grade.encode("G7").is_err());
        assert!(grade.encode("7").is_err());
        assert_eq!(grade.decode(3.0), Some("G3"));
        assert_eq!(FactorSchema::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn encodings_decode_exactly() {
        for f in FactorSchema::shipped().factors {
            for (label, code) in &f.encoding {
                assert_eq!(f.encode(label), Ok(*code));
                assert_eq!(f.decode(*code), Some(label.as_str()));
            }
        }
    }

    #[test]
    fn parse_errors() {
        let bad = [
            "kind = ordinal\n",
            "[a]\nkind = ordinal\nmap.x = 1\nmap.y = 1\n",
            "[a]\nkind = ordinal\nmap.x = 1\nmap.X = 2\n",
            "[a]\nkind = weird\n",
            "[a]\nrequired = true\n",
            "[a]\nkind = binary\nmap.yes = 2\n",
            "[a]\nkind = continuous\n[a]\nkind = continuous\n",
            "[a]\nkind = continuous\nmap.x = 1\n",
        ];
        for text in bad {
            assert!(FactorSchema::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn unmapped_binary_accepts_zero_one() {
        let s = FactorSchema::parse("[flag]\nkind = binary\n").unwrap();
        let f = s.get("flag").unwrap();
        assert_eq!(f.encode("1"), Ok(1.0));
        assert!(f.encode("2").is_err());
    }
}
