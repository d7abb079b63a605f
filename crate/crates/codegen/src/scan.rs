//! Static line scan of generated scripts against a blocklist.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warn,
    Block,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub pattern: String,
    pub line: usize,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanVerdict {
    pub allowed: bool,
    pub findings: Vec<Finding>,
}

impl ScanVerdict {
    pub fn summary(&self) -> String {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Block)
            .map(|f| format!("line {}: {}", f.line, f.pattern))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

const RULES: &[(&str, &str, Severity)] = &[
    ("network module import", r"^\s*(?:import|from)\s+(?:socket|requests|urllib|urllib2|urllib3|http|httpx|aiohttp|ftplib|smtplib|telnetlib|paramiko|websocket|websockets|xmlrpc)\b", Severity::Block),
    ("network call", r"\b(?:urlopen|socket\.socket|create_connection|requests\.(?:get|post|put|delete))\s*\(", Severity::Block),
    ("subprocess import", r"^\s*(?:import|from)\s+(?:subprocess|pty|commands|multiprocessing)\b", Severity::Block),
    ("shell escape", r"\bos\.(?:system|popen|exec\w*|spawn\w*|fork|kill)\s*\(|\bsubprocess\.", Severity::Block),
    ("dynamic code execution", r"(?:^|[^\w.])(?:eval|exec|compile|__import__)\s*\(", Severity::Block),
    ("importlib", r"\bimportlib\b", Severity::Block),
    ("native code", r"^\s*(?:import|from)\s+(?:ctypes|cffi)\b", Severity::Block),
    ("environment access", r"\bos\.(?:environ|getenv|putenv|unsetenv)\b|\benviron\s*\[", Severity::Block),
    ("absolute path", r#"['"](?:/|[A-Za-z]:[\\/]|~[/\\])"#, Severity::Block),
    ("parent directory path", r#"['"][^'"]*\.\.[/\\]|['"]\.\.['"]"#, Severity::Block),
    ("parent directory traversal", r"\.parent\b|\bpardir\b", Severity::Block),
    ("directory change", r"\bos\.chdir\s*\(", Severity::Block),
    ("recursive delete", r"\bshutil\.rmtree\s*\(", Severity::Block),
    ("symlink", r"\bos\.(?:symlink|link)\s*\(", Severity::Block),
    ("os module", r"^\s*(?:import|from)\s+os\b", Severity::Warn),
];

fn compiled() -> &'static [(&'static str, Regex, Severity)] {
    static CELL: OnceLock<Vec<(&'static str, Regex, Severity)>> = OnceLock::new();
    CELL.get_or_init(|| {
        RULES
            .iter()
            .map(|&(name, re, sev)| (name, Regex::new(re).expect("scan rule compiles"), sev))
            .collect()
    })
}

/// Scans each line against the blocklist. Comment-only lines are skipped.
pub fn security_scan(code: &str) -> ScanVerdict {
    let mut findings = Vec::new();
    for (i, line) in code.lines().enumerate() {
        if line.trim_start().starts_with('#') {
            continue;
        }
        for (name, re, sev) in compiled() {
            if re.is_match(line) {
                findings.push(Finding {
                    pattern: name.to_string(),
                    line: i + 1,
                    severity: *sev,
                });
            }
        }
    }
    let allowed = !findings.iter().any(|f| f.severity == Severity::Block);
    ScanVerdict { allowed, findings }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benign_script_allowed() {
        let code = "import vtk\n\ndef update_vtk_scene(renderer):\n    reader = vtk.vtkXMLImageDataReader()\n    reader.SetFileName('headsq.vti')\n    print('ok')\n";
        let v = security_scan(code);
        assert!(v.allowed, "{v:?}");
        assert!(v.findings.is_empty());
    }

    #[test]
    fn os_import_only_warns() {
        let v = security_scan("import os\nprint(os.path.join('a', 'b'))\n");
        assert!(v.allowed);
        assert_eq!(v.findings.len(), 1);
        assert_eq!(v.findings[0].severity, Severity::Warn);
    }

    #[test]
    fn each_rule_has_a_trigger() {
        let cases = [
            "import socket",
            "x = urlopen('http://example.com')",
            "import subprocess",
            "os.system('ls')",
            "eval('1+1')",
            "import importlib",
            "import ctypes",
            "print(os.environ)",
            "open('/etc/passwd', 'w')",
            "open('../escape.txt', 'w')",
            "p = Path.cwd().parent / 'x'",
            "os.chdir('x')",
            "shutil.rmtree('x')",
            "os.symlink('a', 'b')",
        ];
        for c in cases {
            let v = security_scan(c);
            assert!(!v.allowed, "not blocked: {c}");
            assert_eq!(v.findings[0].line, 1);
        }
    }

    #[test]
    fn comments_and_method_names_ignored() {
        assert!(security_scan("# import socket\nmapper.evaluate(3)\nobj.exec_plan()\n").allowed);
    }
}
