void test(Quu_inv, BPA, Kinf) {
    config_ex(WEIGHT_STATIONARY, NO_ACTIVATION, false, false);
    config_ld(4 * sizeof(float), 0);
    config_ld(12 * sizeof(float), 1);
    config_st(12 * sizeof(float));

    static uint32_t Quu_inv_sp_addr = 0;
    static uint32_t BPA_sp_addr = 4;
    static uint32_t Kinf_acc_addr = 1 << 31;

    // Quu_inv as 4x4 tiles, tile (ib, kb) at row (ib * 1 + kb) * 4
    for (int ib = 0; ib < 1; ib++) {
        for (int kb = 0; kb < 1; kb++) {
            mvin(Quu_inv + ib * 16 + kb * 4, Quu_inv_sp_addr + (ib * 1 + kb) * 4, 4, 4);
        }
    }
    for (int kb = 0; kb < 1; kb++) {
        for (int jb = 0; jb < 3; jb++) {
            mvin2(BPA + kb * 48 + jb * 4, BPA_sp_addr + (kb * 3 + jb) * 4, 4, 4);
        }
    }

    for (int ib = 0; ib < 1; ib++) {
        for (int jb = 0; jb < 3; jb++) {
            for (int kb = 0; kb < 1; kb++) {
                uint32_t c_addr = Kinf_acc_addr + (ib * 3 + jb) * 4;
                if (kb > 0) c_addr |= 1 << 30;
                preload(BPA_sp_addr + (kb * 3 + jb) * 4, c_addr, 4, 4, 4, 4);
                compute_preloaded(Quu_inv_sp_addr + (ib * 1 + kb) * 4, 0xffffffff, 4, 4, 4, 4);
            }
        }
    }

    for (int ib = 0; ib < 1; ib++) {
        mvout(Kinf + ib * 48, Kinf_acc_addr + ib * 12, 12, 4);
    }
    fence();
}
