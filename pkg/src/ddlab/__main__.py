from __future__ import annotations

from ddlab.cli import main

raise SystemExit(main())
