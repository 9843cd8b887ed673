void test(KinfT, r, Kt_r) {
    config_ex(WEIGHT_STATIONARY, NO_ACTIVATION, false, false);
    config_ld(4 * sizeof(float), 0);
    config_ld(1 * sizeof(float), 1);
    config_st(1 * sizeof(float));

    static uint32_t KinfT_sp_addr = 0;
    static uint32_t r_sp_addr = 12;
    static uint32_t Kt_r_acc_addr = 1 << 31;

    // KinfT as 4x4 tiles, tile (ib, kb) at row (ib * 1 + kb) * 4
    for (int ib = 0; ib < 3; ib++) {
        for (int kb = 0; kb < 1; kb++) {
            mvin(KinfT + ib * 16 + kb * 4, KinfT_sp_addr + (ib * 1 + kb) * 4, 4, 4);
        }
    }
    for (int kb = 0; kb < 1; kb++) {
        for (int jb = 0; jb < 1; jb++) {
            mvin2(r + kb * 4 + jb * 4, r_sp_addr + (kb * 1 + jb) * 4, 1, 4);
        }
    }

    // the single weight tile stays latched after the first preload
    for (int ib = 0; ib < 3; ib++) {
        for (int jb = 0; jb < 1; jb++) {
            for (int kb = 0; kb < 1; kb++) {
                uint32_t c_addr = Kt_r_acc_addr + (ib * 1 + jb) * 4;
                if (kb > 0) c_addr |= 1 << 30;
                preload(ib == 0 ? r_sp_addr : 0xffffffff, c_addr, 1, 4, 1, 4);
                compute_preloaded(KinfT_sp_addr + (ib * 1 + kb) * 4, 0xffffffff, 4, 4, 1, 4);
            }
        }
    }

    for (int ib = 0; ib < 3; ib++) {
        mvout(Kt_r + ib * 4, Kt_r_acc_addr + ib * 4, 1, 4);
    }
    fence();
}
