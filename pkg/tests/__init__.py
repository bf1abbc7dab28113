"""
测试模块
Tests for the two-body integrals linkage system
"""
