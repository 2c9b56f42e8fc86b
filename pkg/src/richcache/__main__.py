import sys

from richcache.cli import main

sys.exit(main())
