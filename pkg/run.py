#!/usr/bin/env python3
"""
Run the sequence-model experiment CLI
"""

from app.main import main

if __name__ == "__main__":
    main()
