use std::fmt;
use std::path::Path;

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad or unreadable config, inconsistent parameters.
    Config(String),
    /// Input data that cannot be read or does not parse.
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) => m,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": { "kind": self.kind(), "exit_code": self.exit_code(), "message": self.message() } })
            .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn config(msg: impl fmt::Display) -> CliError {
    CliError::Config(msg.to_string())
}

pub fn data(msg: impl fmt::Display) -> CliError {
    CliError::Data(msg.to_string())
}

pub fn read_input(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| data(format!("cannot read {}: {e}", path.display())))
}

pub fn read_input_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| data(format!("cannot read {}: {e}", path.display())))
}

pub fn write_output(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| data(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| data(format!("cannot write {}: {e}", path.display())))
}

/// Reads a JSON config file; unknown keys and type mismatches are config
/// errors that name the offending key.
pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))
}

pub fn to_json_pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable");
    s.push('\n');
    s
}
