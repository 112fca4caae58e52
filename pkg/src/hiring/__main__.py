from hiring.cli import main

raise SystemExit(main())
