#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
GAAR - 简易运行脚本
Entry point for the argument reconstruction engine and its tooling.

Usage:
    python run.py validate problem.txt                 # 有效性与可剪枝前提
    python run.py reconstruct --topic T --argument A   # 重构一条论证
    python run.py topsis table.csv                     # 成本/质量TOPSIS
    python run.py --help                               # 查看帮助
"""

import sys
import os

# 添加当前目录到路径
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from cli import main

if __name__ == "__main__":
    sys.exit(main())
