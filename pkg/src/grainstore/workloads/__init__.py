from .tpcc import (ConsistencyReport, NewOrderInputs, OrderStatusInputs,
                   PaymentInputs, TpccConfig, TpccGen, TpccLayout,
                   consistency_check, last_name, run_one, tpcc_load, tpcc_schemas,
                   txn_new_order, txn_order_status, txn_payment)
from .ycsb import (YcsbConfig, YcsbGen, YcsbLayout, key_for, ycsb_load,
                   ycsb_schema, ycsb_txn, ycsb_value)
from .zipf import ZipfianGen, zeta, zipf_next

__all__ = [
    "ConsistencyReport", "NewOrderInputs", "OrderStatusInputs",
    "PaymentInputs", "TpccConfig", "TpccGen", "TpccLayout", "YcsbConfig",
    "YcsbGen", "YcsbLayout", "ZipfianGen", "consistency_check", "key_for",
    "last_name", "run_one", "tpcc_load", "tpcc_schemas", "txn_new_order",
    "txn_order_status", "txn_payment", "ycsb_load", "ycsb_schema",
    "ycsb_txn", "ycsb_value", "zeta", "zipf_next",
]
