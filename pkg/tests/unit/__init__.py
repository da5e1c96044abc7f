"""Unit tests for covert-uav."""