#!/usr/bin/env python
import sys
import unittest

if __name__ == "__main__":
    suite = unittest.defaultTestLoader.discover("gtnn/tests", top_level_dir=".")
    result = unittest.TextTestRunner(verbosity=2).run(suite)
    sys.exit(not result.wasSuccessful())
